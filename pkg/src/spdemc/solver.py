"""Exponential integrator on a spectral truncation, plus coupled differences.

One step of the scheme advances each retained mode k by

    X'_k = e**(-lambda_k tau) X_k + phi1(lambda_k, tau) F_k(X)
           + sqrt(mu_k) (1 + zeta_k X_{k+m}) I_k

where I_k is the exact stochastic-convolution integral for the step taken
from a shared noise lattice, and X_{k+m} reads as zero beyond the truncation.
Pair and double differences couple two or four such solves through the same
lattice; this coupling is what hierarchical estimators feed on.

Internally everything runs on batches (leading sample axis); the public
single-sample operations are thin wrappers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.fft import dst

from .model import (
    DriftKind,
    DriftSpec,
    ProblemSpec,
    QoIForm,
    QoIFunctional,
    phi1_factors,
)
from .noise import NoiseLattice, _coarsen_integrals

QoIValue = Union[float, np.ndarray]

_SQRT2 = math.sqrt(2.0)


@dataclass
class State:
    """Truncated coefficient vector at a point in time."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1:
            raise ValueError("state coefficients must be a 1-d vector")


@dataclass
class SolveResult:
    terminal: State
    qoi_value: QoIValue
    cost_units: float


# -- sine-basis pseudospectral transforms ------------------------------------


def coeffs_to_grid(coeffs: np.ndarray, grid_points: int) -> np.ndarray:
    """Values of sum_k c_k sqrt(2) sin(k pi x) on the interior grid
    x_i = i/(grid_points+1), i = 1..grid_points. Acts on the last axis."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    if grid_points < n:
        raise ValueError(f"grid of {grid_points} points cannot hold {n} modes")
    padded = np.zeros(coeffs.shape[:-1] + (grid_points,))
    padded[..., :n] = coeffs
    return dst(padded, type=1, axis=-1) / _SQRT2


def grid_to_coeffs(values: np.ndarray, n_coeffs: int) -> np.ndarray:
    """First n_coeffs sine-basis coefficients from interior grid values,
    by the discrete orthogonality of the type-I sine transform."""
    values = np.asarray(values, dtype=float)
    grid_points = values.shape[-1]
    if n_coeffs > grid_points:
        raise ValueError(f"cannot recover {n_coeffs} modes from {grid_points} points")
    full = dst(values, type=1, axis=-1) * (_SQRT2 / (2.0 * (grid_points + 1)))
    return full[..., :n_coeffs]


def _drift_batch(drift: DriftSpec, x: np.ndarray) -> np.ndarray:
    """Drift coefficients for a batch of states (..., N)."""
    if drift.kind is DriftKind.ZERO:
        return np.zeros_like(x)
    if drift.kind is DriftKind.LINEAR_SCALE:
        return drift.linear_scale * x
    n = x.shape[-1]
    f = drift.pointwise_function()
    grid = coeffs_to_grid(x, drift.oversample * n)
    return grid_to_coeffs(f(grid), n)


def drift_coefficients(drift: DriftSpec, state: State) -> np.ndarray:
    """First N coefficients of the drift applied to the state."""
    return _drift_batch(drift, state.coeffs)


# -- stepping -----------------------------------------------------------------


class _Stepper:
    """Precomputed per-mode factors for (problem, N, tau)."""

    def __init__(self, problem: ProblemSpec, n_modes: int, tau: float):
        lambdas = problem.spectrum.lambdas(n_modes)
        self.n = n_modes
        self.tau = tau
        self.decay = np.exp(-lambdas * tau)
        self.phi1 = phi1_factors(lambdas, tau)
        self.sqrt_mu = np.sqrt(problem.noise.mu(n_modes))
        self.sqrt_mu_zeta = problem.noise.sqrt_mu_zeta(n_modes)
        self.shift = problem.noise.shift
        self.drift = problem.drift

    def shifted(self, x: np.ndarray) -> np.ndarray:
        """X_{k+m}, zero beyond the truncation."""
        m = self.shift
        if m == 0:
            return x
        out = np.zeros_like(x)
        if m < self.n:
            out[..., : self.n - m] = x[..., m:]
        return out

    def advance(self, x: np.ndarray, noise_col: np.ndarray) -> np.ndarray:
        mult = self.sqrt_mu + self.sqrt_mu_zeta * self.shifted(x)
        return self.decay * x + self.phi1 * _drift_batch(self.drift, x) + mult * noise_col


def step(state: State, noise_column: np.ndarray, tau: float, problem: ProblemSpec) -> State:
    """One exponential-integrator step from t to t+tau."""
    noise_column = np.asarray(noise_column, dtype=float)
    n = len(state.coeffs)
    if noise_column.shape != (n,):
        raise ValueError(
            f"noise column of shape {noise_column.shape} does not match {n} modes"
        )
    stepper = _Stepper(problem, n, tau)
    return State(stepper.advance(state.coeffs, noise_column), state.time + tau)


# -- quantities of interest ---------------------------------------------------


def h_norm(value: QoIValue) -> float:
    """Norm of a QoI value: Euclidean on coefficient vectors (Parseval),
    absolute value on scalars."""
    if np.isscalar(value):
        return abs(float(value))
    return float(np.linalg.norm(np.asarray(value)))


def pad_to(vec: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad a coefficient vector (last axis) to length n."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape[-1] >= n:
        return vec
    out = np.zeros(vec.shape[:-1] + (n,))
    out[..., : vec.shape[-1]] = vec
    return out


class _QoIAccumulator:
    """Applies the functional psi per step or at the terminal time."""

    def __init__(self, problem: ProblemSpec, n_modes: int, tau: float):
        self.spec = problem.qoi
        self.tau = tau
        if self.spec.functional is QoIFunctional.LINEAR_FUNCTIONAL:
            w = np.zeros(n_modes)
            given = np.asarray(self.spec.weights, dtype=float)
            w[: min(n_modes, len(given))] = given[:n_modes]
            self.weights = w
        else:
            self.weights = None
        self.running = None

    def psi(self, x: np.ndarray):
        if self.weights is None:
            return x
        return x @ self.weights

    def observe(self, x: np.ndarray) -> None:
        """Called at every t_j, j = 0..M-1, before the step (left endpoint)."""
        if self.spec.form is QoIForm.TIME_INTEGRAL:
            contrib = self.psi(x)
            self.running = contrib if self.running is None else self.running + contrib

    def finish(self, x_terminal: np.ndarray):
        if self.spec.form is QoIForm.TERMINAL:
            return self.psi(x_terminal)
        return self.tau * self.running


def solve_cost_units(m_steps: int, n_modes: int, nemytskii: bool) -> float:
    """Accounted cost of one solve: M*N*max(log2 N, 1)**l with l = 1 iff the
    drift needs transforms (clamped so the cost stays positive at N = 1)."""
    log_factor = max(math.log2(n_modes), 1.0) if nemytskii else 1.0
    return float(m_steps * n_modes) * log_factor


# -- solving ------------------------------------------------------------------


def _initial_batch(problem: ProblemSpec, n_modes: int, batch: int,
                   init_coeffs: Optional[np.ndarray]) -> np.ndarray:
    det = problem.init.deterministic_coefficients(n_modes)
    x0 = np.broadcast_to(det, (batch, n_modes)).copy()
    if problem.init.is_random:
        if init_coeffs is None:
            raise ValueError(
                "problem has a random initial condition but the lattice "
                "carries no initial-condition draws"
            )
        x0 += init_coeffs[:, :n_modes]
    return x0


def _solve_batch(
    problem: ProblemSpec,
    m_steps: int,
    n_modes: int,
    integrals: np.ndarray,
    tau_fine: float,
    init_coeffs: Optional[np.ndarray] = None,
    keep_terminal: bool = False,
):
    """Batched solve. integrals: (B, K, fine_steps) with K >= n_modes and
    fine_steps a power-of-two multiple of m_steps. Returns (qoi, terminal)."""
    batch, k_modes, fine_steps = integrals.shape
    if n_modes > k_modes:
        raise ValueError(f"lattice holds {k_modes} modes, solve needs {n_modes}")
    if fine_steps % m_steps:
        raise ValueError(f"{m_steps} steps do not divide {fine_steps} lattice steps")
    factor = fine_steps // m_steps
    if factor & (factor - 1):
        raise ValueError(f"step ratio {factor} is not a power of two")
    lambdas = problem.spectrum.lambdas(n_modes)
    noise = integrals[:, :n_modes, :]
    if factor > 1:
        noise = _coarsen_integrals(noise, lambdas, tau_fine, factor)
    tau = tau_fine * factor

    stepper = _Stepper(problem, n_modes, tau)
    acc = _QoIAccumulator(problem, n_modes, tau)
    x = _initial_batch(problem, n_modes, batch, init_coeffs)
    for j in range(m_steps):
        acc.observe(x)
        x = stepper.advance(x, noise[:, :, j])
    qoi = acc.finish(x)
    return qoi, (x if keep_terminal else None)


def solve(
    problem: ProblemSpec,
    m_steps: int,
    n_modes: int,
    lattice: NoiseLattice,
    trajectory_csv=None,
) -> SolveResult:
    """Run the integrator on (M, N) = (m_steps, n_modes) grids, consuming the
    lattice coarsened to the requested step count.

    Optionally dumps the trajectory as CSV rows (step, mode, coefficient).
    """
    if n_modes < 1 or m_steps < 1:
        raise ValueError("m_steps and n_modes must be positive")
    init = lattice.init_coeffs[None, :] if lattice.init_coeffs is not None else None
    if trajectory_csv is None:
        qoi, terminal = _solve_batch(
            problem, m_steps, n_modes, lattice.integrals[None, :, :],
            lattice.tau_fine, init, keep_terminal=True,
        )
    else:
        qoi, terminal = _traced_solve(problem, m_steps, n_modes, lattice, trajectory_csv)
    cost = solve_cost_units(m_steps, n_modes, problem.drift.is_nemytskii)
    value = qoi[0] if isinstance(qoi, np.ndarray) and qoi.ndim == 2 else float(qoi[0])
    return SolveResult(State(terminal[0], problem.horizon), value, cost)


def _traced_solve(problem, m_steps, n_modes, lattice, trajectory_csv):
    """Single-sample solve that also writes (step, mode, coefficient) rows."""
    factor = lattice.fine_steps // m_steps
    lambdas = problem.spectrum.lambdas(n_modes)
    noise = lattice.integrals[None, :n_modes, :]
    if factor > 1:
        noise = _coarsen_integrals(noise, lambdas, lattice.tau_fine, factor)
    tau = lattice.tau_fine * factor
    stepper = _Stepper(problem, n_modes, tau)
    acc = _QoIAccumulator(problem, n_modes, tau)
    init = lattice.init_coeffs[None, :] if lattice.init_coeffs is not None else None
    x = _initial_batch(problem, n_modes, 1, init)
    with open(trajectory_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "mode", "coefficient"])
        for j in range(m_steps):
            for k in range(n_modes):
                writer.writerow([j, k + 1, repr(float(x[0, k]))])
            acc.observe(x)
            x = stepper.advance(x, noise[:, :, j])
        for k in range(n_modes):
            writer.writerow([m_steps, k + 1, repr(float(x[0, k]))])
    return acc.finish(x), x


# -- grid hierarchies ---------------------------------------------------------


class Grids:
    """Resolution sequences (M_k) and (N_k) indexed by refinement level."""

    def __init__(self, m_seq: Union[Sequence[int], Callable[[int], int]],
                 n_seq: Union[Sequence[int], Callable[[int], int]]):
        self._m = m_seq
        self._n = n_seq

    def m(self, k: int) -> int:
        return int(self._m(k) if callable(self._m) else self._m[k])

    def n(self, k: int) -> int:
        return int(self._n(k) if callable(self._n) else self._n[k])


class DyadicGrids(Grids):
    """M_k = N_k = 2**(k+1): doubling grids with a non-degenerate base level."""

    def __init__(self):
        super().__init__(lambda k: 1 << (k + 1), lambda k: 1 << (k + 1))


def _batch_qoi_delta(qois: list, signs: list, n_pad: int):
    """Signed sum of per-solve QoI batches, vectors zero-padded to n_pad."""
    first = qois[0]
    if first.ndim == 1:  # scalar QoI per sample
        out = np.zeros_like(first)
        for q, s in zip(qois, signs):
            out += s * q
        return out
    out = np.zeros(first.shape[:-1] + (n_pad,))
    for q, s in zip(qois, signs):
        out[..., : q.shape[-1]] += s * q
    return out


def _double_difference_batch(problem, ell, grids: Grids, integrals, tau_fine,
                             init_coeffs):
    """Batched mixed difference at multi-index ell; all solves share the batch."""
    l1, l2 = ell
    cells: list[tuple[int, int, float]] = [(grids.m(l1), grids.n(l2), 1.0)]
    if l1 > 0:
        cells.append((grids.m(l1 - 1), grids.n(l2), -1.0))
    if l2 > 0:
        cells.append((grids.m(l1), grids.n(l2 - 1), -1.0))
    if l1 > 0 and l2 > 0:
        cells.append((grids.m(l1 - 1), grids.n(l2 - 1), 1.0))
    qois = [
        _solve_batch(problem, m, n, integrals, tau_fine, init_coeffs)[0]
        for m, n, _ in cells
    ]
    return _batch_qoi_delta(qois, [s for _, _, s in cells], grids.n(l2))


def double_difference(
    problem: ProblemSpec,
    ell: tuple[int, int],
    grids: Grids,
    lattice: NoiseLattice,
) -> QoIValue:
    """Mixed first difference of the QoI across one time and one space
    refinement (four coupled solves in the interior, two on the boundary
    axes, one at the origin), all driven by the same lattice."""
    init = lattice.init_coeffs[None, :] if lattice.init_coeffs is not None else None
    out = _double_difference_batch(
        problem, ell, grids, lattice.integrals[None, :, :], lattice.tau_fine, init
    )
    return out[0] if out.ndim == 2 else float(out[0])


def _pair_difference_batch(problem, fine, coarse, integrals, tau_fine, init_coeffs):
    mf, nf = fine
    qf = _solve_batch(problem, mf, nf, integrals, tau_fine, init_coeffs)[0]
    if coarse is None:
        return qf
    mc, nc = coarse
    if mf % mc:
        raise ValueError(f"coarse steps {mc} do not divide fine steps {mf}")
    qc = _solve_batch(problem, mc, nc, integrals, tau_fine, init_coeffs)[0]
    return _batch_qoi_delta([qf, qc], [1.0, -1.0], max(nf, nc))


def pair_difference(
    problem: ProblemSpec,
    fine: tuple[int, int],
    coarse: Optional[tuple[int, int]],
    lattice: NoiseLattice,
) -> QoIValue:
    """Coupled fine-minus-coarse difference on a shared lattice; with no
    coarse grids (base level) this is a plain solve value."""
    init = lattice.init_coeffs[None, :] if lattice.init_coeffs is not None else None
    out = _pair_difference_batch(
        problem, fine, coarse, lattice.integrals[None, :, :], lattice.tau_fine, init
    )
    return out[0] if out.ndim == 2 else float(out[0])
