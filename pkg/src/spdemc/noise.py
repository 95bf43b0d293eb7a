"""Exact per-mode stochastic-convolution integrals on a fine time lattice.

Each Monte Carlo sample owns one lattice of integrals
``int_{t_j}^{t_{j+1}} e**(-lambda_k (t_{j+1}-s)) dB_k(s)`` on the finest grid
in play; every coupled solve inside a difference consumes the SAME lattice,
with coarser time grids obtained by the exact pairwise aggregation
``e**(-lambda h) * left + right`` and coarser mode truncations simply reading
fewer rows. Randomness comes from counter-based (Philox) streams keyed by
(seed, context, multi-index, sample), so regeneration is bit-identical
regardless of scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .model import ProblemSpec, SpectrumSpec, _one_minus_exp_ratio

# Refuse to allocate lattices beyond this many entries (~0.5 GiB of float64).
MAX_LATTICE_ENTRIES = 1 << 26

StreamId = tuple[int, ...]


def ou_variance(lam: float, tau: float) -> float:
    """Variance (1 - e**(-2 lam tau)) / (2 lam) of the exact one-step
    stochastic-convolution integral; limits to tau as lam -> 0."""
    if tau <= 0:
        raise ValueError(f"step must be positive, got {tau}")
    if lam < 0:
        raise ValueError(f"rate must be non-negative, got {lam}")
    return tau * float(_one_minus_exp_ratio(2.0 * lam * tau))


def ou_variances(lambdas: np.ndarray, tau: float) -> np.ndarray:
    """Vectorized ou_variance over an array of rates."""
    return tau * _one_minus_exp_ratio(2.0 * np.asarray(lambdas) * tau)


def stream_generator(stream_id: Sequence[int]) -> Generator:
    """Counter-based generator for a stream key (first entry: global seed)."""
    sid = tuple(int(s) for s in stream_id)
    ss = SeedSequence(entropy=sid[0], spawn_key=sid[1:])
    return Generator(Philox(ss))


@dataclass
class NoiseLattice:
    """Exact OU integrals per (mode, fine step), plus the initial-condition
    normals when the problem's initial condition is random (those draws must
    be shared by all solves coupled through this lattice).

    integrals[k-1, j] is the integral for mode k on [t_j, t_{j+1}].
    """

    mode_count: int
    fine_steps: int
    tau_fine: float
    integrals: np.ndarray
    stream_id: StreamId
    init_coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.integrals.shape != (self.mode_count, self.fine_steps):
            raise ValueError(
                f"integrals shape {self.integrals.shape} does not match "
                f"({self.mode_count}, {self.fine_steps})"
            )

    # -- binary debug dump --------------------------------------------------

    def dump(self, path) -> None:
        """Little-endian binary dump: u32 K, u32 steps, f64 tau, u32 keylen,
        u64*keylen stream id, u8 has_init, then rows of f64 (init row first
        when present, then the integral matrix in C order)."""
        with open(path, "wb") as f:
            f.write(struct.pack("<IId", self.mode_count, self.fine_steps, self.tau_fine))
            f.write(struct.pack("<I", len(self.stream_id)))
            f.write(struct.pack(f"<{len(self.stream_id)}Q", *self.stream_id))
            f.write(struct.pack("<B", 1 if self.init_coeffs is not None else 0))
            if self.init_coeffs is not None:
                f.write(self.init_coeffs.astype("<f8").tobytes())
            f.write(self.integrals.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "NoiseLattice":
        with open(path, "rb") as f:
            k, steps, tau = struct.unpack("<IId", f.read(16))
            (keylen,) = struct.unpack("<I", f.read(4))
            stream_id = struct.unpack(f"<{keylen}Q", f.read(8 * keylen))
            (has_init,) = struct.unpack("<B", f.read(1))
            init = None
            if has_init:
                init = np.frombuffer(f.read(8 * k), dtype="<f8").copy()
            data = np.frombuffer(f.read(8 * k * steps), dtype="<f8").copy()
        return cls(k, steps, tau, data.reshape(k, steps), stream_id, init)


def _check_size(mode_count: int, fine_steps: int) -> None:
    if mode_count < 1 or fine_steps < 1:
        raise ValueError("lattice dimensions must be positive")
    if mode_count * fine_steps > MAX_LATTICE_ENTRIES:
        raise ValueError(
            f"refusing lattice of {mode_count}x{fine_steps} entries "
            f"(limit {MAX_LATTICE_ENTRIES})"
        )


def lattice_from_lambdas(
    lambdas: np.ndarray,
    tau_fine: float,
    fine_steps: int,
    stream_id: Sequence[int],
    init_scale: Optional[np.ndarray] = None,
) -> NoiseLattice:
    """Fill a lattice for explicit mode rates.

    Draw order within the stream is fixed: the optional initial-condition
    coefficients first, then the integral matrix row-major, so entries are a pure
    function of (stream key, mode, step).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    mode_count = len(lambdas)
    _check_size(mode_count, fine_steps)
    gen = stream_generator(stream_id)
    init = None
    if init_scale is not None:
        init = np.asarray(init_scale, dtype=float) * gen.standard_normal(mode_count)
    std = np.sqrt(ou_variances(lambdas, tau_fine))
    integrals = std[:, None] * gen.standard_normal((mode_count, fine_steps))
    return NoiseLattice(mode_count, fine_steps, tau_fine, integrals,
                        tuple(int(s) for s in stream_id), init)


def sample_lattice(
    problem: ProblemSpec, mode_count: int, fine_steps: int, stream_id: Sequence[int]
) -> NoiseLattice:
    """Sample the finest-grid lattice for `problem`.

    Regenerating with the same stream id reproduces bit-identical entries.
    When the initial condition is random its normals are drawn into the
    lattice as well, so coupled solves see one shared initial state.
    """
    if fine_steps < 1:
        raise ValueError("fine_steps must be >= 1")
    tau_fine = problem.horizon / fine_steps
    init_scale = None
    if problem.init.is_random:
        init_scale = problem.init.gaussian_scale(mode_count)
    return lattice_from_lambdas(
        problem.spectrum.lambdas(mode_count), tau_fine, fine_steps, stream_id, init_scale
    )


def aggregate_pair(lam: float, h: float, left: float, right: float):
    """OU integral on [t, t+2h] from the integrals on its two halves:
    e**(-lam h) * left + right, exact for the same Brownian path."""
    return np.exp(-lam * h) * left + right


def _coarsen_integrals(integrals: np.ndarray, lambdas: np.ndarray, tau: float,
                       factor: int) -> np.ndarray:
    """Pairwise aggregation rounds on the last axis (leading axes arbitrary)."""
    out = integrals
    h = tau
    rounds = factor.bit_length() - 1
    for _ in range(rounds):
        decay = np.exp(-lambdas * h)
        out = decay[..., None] * out[..., 0::2] + out[..., 1::2]
        h *= 2.0
    return out


def coarsen(lattice: NoiseLattice, spectrum: SpectrumSpec, factor: int) -> NoiseLattice:
    """Lattice on a grid coarsened by `factor` (a power of two dividing the
    step count), distributionally exact for the same driving path."""
    if factor < 2:
        raise ValueError(f"coarsening factor must be >= 2, got {factor}")
    if factor & (factor - 1):
        raise ValueError(f"coarsening factor must be a power of two, got {factor}")
    if lattice.fine_steps % factor:
        raise ValueError(
            f"factor {factor} does not divide {lattice.fine_steps} fine steps"
        )
    lambdas = spectrum.lambdas(lattice.mode_count)
    coarse = _coarsen_integrals(lattice.integrals, lambdas, lattice.tau_fine, factor)
    return NoiseLattice(
        lattice.mode_count,
        lattice.fine_steps // factor,
        lattice.tau_fine * factor,
        coarse,
        lattice.stream_id,
        lattice.init_coeffs,
    )


class LatticeBatchStream:
    """Chunked batches of lattices for one estimator index.

    One Philox stream (keyed by seed, context and index) serves all samples of
    the index; sample i occupies a fixed segment of the stream, so results do
    not depend on chunk sizes or on which worker processes the index.
    """

    def __init__(self, problem: ProblemSpec, mode_count: int, fine_steps: int,
                 stream_id: Sequence[int]):
        _check_size(mode_count, fine_steps)
        self.problem = problem
        self.mode_count = mode_count
        self.fine_steps = fine_steps
        self.tau_fine = problem.horizon / fine_steps
        self.gen = stream_generator(stream_id)
        self.std = np.sqrt(ou_variances(problem.spectrum.lambdas(mode_count), self.tau_fine))
        self.init_scale = (
            problem.init.gaussian_scale(mode_count) if problem.init.is_random else None
        )

    def next_batch(self, count: int) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """(integrals of shape (count, K, steps), init normals (count, K) or None).

        Per sample the draw order matches `lattice_from_lambdas`: init normals
        first, then the integral matrix.
        """
        if self.init_scale is None:
            z = self.gen.standard_normal((count, self.mode_count, self.fine_steps))
            return self.std[None, :, None] * z, None
        block = self.gen.standard_normal((count, self.mode_count * (1 + self.fine_steps)))
        block = block.reshape(count, self.mode_count, 1 + self.fine_steps)
        init = self.init_scale[None, :] * block[:, :, 0]
        integrals = self.std[None, :, None] * block[:, :, 1:]
        return integrals, init
