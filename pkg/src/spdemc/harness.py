"""Experiment harness: empirical rate surfaces, dominating-surface fits,
cost-versus-error sweeps, references, and CSV/JSON persistence.

Desk-scale defaults deliberately shrink the full experiments (fewer samples
per surface point, larger tolerances, coarser pseudo-references) while
preserving the convergence slopes being measured; everything is overridable.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .estimator import (
    DOMAIN_REFERENCE,
    DOMAIN_SURFACE,
    BudgetExceededError,
    EstimatorOutput,
    MlmcParams,
    RateParams,
    VarianceModel,
    allocate_samples,
    build_index_set,
    cost_model,
    mlmc_params,
    run_mimc,
    run_mlmc,
)
from .model import (
    DriftKind,
    DriftSpec,
    InitKind,
    InitSpec,
    NoiseSpec,
    ProblemSpec,
    QoISpec,
    SpectrumSpec,
)
from .noise import LatticeBatchStream
from .solver import DyadicGrids, Grids, _double_difference_batch, h_norm, pad_to

DOMAIN_SWEEP = 4

# Desk-scale defaults (full-scale values are larger; see module docstring).
DEFAULT_SURFACE_SAMPLES = 1000
DEFAULT_REFERENCE_EPSILON = 2.0**-8
MAX_SURFACE_LEVEL = 8


class DegenerateSurfaceError(ValueError):
    """Raised when a rate surface carries no positive values to fit."""


# -- built-in problems ---------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    """A named problem together with its rate parameters and reference mode."""

    name: str
    problem: ProblemSpec
    rates: RateParams
    zero_mean: bool
    description: str = ""


def _linear_preset(name: str, nu: float, description: str) -> Preset:
    problem = ProblemSpec(
        spectrum=SpectrumSpec(scale=0.2, exponent=nu),
        noise=NoiseSpec(mu_exponent=1.01, shift=1),
        drift=DriftSpec(kind=DriftKind.LINEAR_SCALE, linear_scale=1.0),
        init=InitSpec(kind=InitKind.DECAYING_GAUSSIAN, decay=2.0),
        horizon=1.0,
        qoi=QoISpec(),
    )
    rates = RateParams(b1=1.0, b2=nu, kappa=1.0, nu=nu, log_cost_exponent=0)
    return Preset(name, problem, rates, zero_mean=True, description=description)


def _nonlinear_preset(name: str, nu: float, description: str) -> Preset:
    problem = ProblemSpec(
        spectrum=SpectrumSpec(scale=1.0, exponent=nu),
        noise=NoiseSpec(mu_exponent=1.0001, shift=2),
        drift=DriftSpec(kind=DriftKind.NEMYTSKII_SINE_PLUS_ID, oversample=4),
        init=InitSpec(kind=InitKind.HAT_FUNCTION),
        horizon=1.0,
        qoi=QoISpec(),
    )
    rates = RateParams(b1=1.0, b2=nu, kappa=1.0, nu=nu, log_cost_exponent=1)
    return Preset(name, problem, rates, zero_mean=False, description=description)


_PRESETS = {
    p.name: p
    for p in [
        _linear_preset("linear_nu43", 4.0 / 3.0, "linear drift, multiplicative noise, nu=4/3"),
        _linear_preset("linear_nu2", 2.0, "linear drift, multiplicative noise, nu=2"),
        _linear_preset("linear_nu10over9", 10.0 / 9.0, "linear drift, multiplicative noise, nu=10/9"),
        _nonlinear_preset("nonlinear_nu43", 4.0 / 3.0, "sine Nemytskii drift, multiplicative noise, nu=4/3"),
        _nonlinear_preset("nonlinear_nu2", 2.0, "sine Nemytskii drift, multiplicative noise, nu=2"),
    ]
}


def list_presets() -> list[str]:
    return sorted(_PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")


# -- empirical rate surfaces ---------------------------------------------------


@dataclass
class RateSurface:
    """Monte Carlo estimates of the root-mean-square mixed-difference norm
    over a grid of multi-indices."""

    grid: dict  # (l1, l2) -> (e_f, stderr, samples)
    problem: dict = field(default_factory=dict)

    def max_level(self) -> int:
        return max(max(l1, l2) for l1, l2 in self.grid)

    def point(self, l1: int, l2: int) -> tuple[float, float, int]:
        return self.grid[(l1, l2)]


def estimate_rate_surface(
    problem: ProblemSpec,
    max_level: int,
    samples: int = DEFAULT_SURFACE_SAMPLES,
    seed: int = 0,
    grids: Optional[Grids] = None,
    budget_cap: Optional[float] = None,
    log_cost_exponent: int = 0,
    threads: int = 1,
) -> RateSurface:
    """Mean-square mixed-difference norms e_F on the grid [0..max_level]^2,
    each point from `samples` independent coupled draws; standard errors by
    the delta method on the mean of squared norms."""
    if max_level > MAX_SURFACE_LEVEL:
        raise ValueError(f"max_level {max_level} exceeds the desk-scale guard "
                         f"{MAX_SURFACE_LEVEL}")
    grids = grids or DyadicGrids()
    cells = [(l1, l2) for l1 in range(max_level + 1) for l2 in range(max_level + 1)]
    if budget_cap is not None:
        projected = samples * sum(cost_model(ell, log_cost_exponent) for ell in cells)
        if projected > budget_cap:
            raise BudgetExceededError(
                projected, budget_cap,
                {"samples": samples, "cells": len(cells)},
            )
    args = [(problem, ell, grids, samples, seed) for ell in cells]
    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_surface_cell, args))
    else:
        results = [_surface_cell(a) for a in args]
    grid = {ell: res for ell, res in zip(cells, results)}
    return RateSurface(grid, problem.to_dict())


def _surface_cell(args) -> tuple[float, float, int]:
    problem, ell, grids, samples, seed = args
    l1, l2 = ell
    m_fine, k_modes = grids.m(l1), grids.n(l2)
    stream = LatticeBatchStream(problem, k_modes, m_fine, (seed, DOMAIN_SURFACE, l1, l2))
    sq_sum = 0.0
    sq_sq_sum = 0.0
    done = 0
    per_sample = k_modes * (m_fine + 1)
    chunk = max(1, min(samples, (1 << 24) // per_sample))
    while done < samples:
        b = min(chunk, samples - done)
        integrals, init = stream.next_batch(b)
        delta = _double_difference_batch(problem, ell, grids, integrals,
                                         stream.tau_fine, init)
        sq = delta**2 if delta.ndim == 1 else (delta**2).sum(axis=1)
        sq_sum += float(sq.sum())
        sq_sq_sum += float((sq**2).sum())
        done += b
    mean_sq = sq_sum / samples
    e_f = math.sqrt(mean_sq)
    if samples > 1 and e_f > 0:
        var_sq = max(sq_sq_sum - samples * mean_sq**2, 0.0) / (samples - 1)
        stderr = math.sqrt(var_sq / samples) / (2.0 * e_f)
    else:
        stderr = 0.0
    return e_f, stderr, samples


# -- dominating-surface fit ----------------------------------------------------


@dataclass
class SurfaceFit:
    """Parameters of p(l1,l2) = 2**-max(b1*l1/2 + b2*l2/2 + c1, b3*l2 + c2)."""

    b1_bar: float
    b2_bar: float
    b3_bar: float
    c1: float
    c2: float
    dominates: bool

    def evaluate(self, l1, l2):
        a = self.b1_bar * np.asarray(l1) / 2.0 + self.b2_bar * np.asarray(l2) / 2.0 + self.c1
        b = self.b3_bar * np.asarray(l2) + self.c2
        return 2.0 ** -np.maximum(a, b)

    def to_dict(self) -> dict:
        return {
            "B1bar": self.b1_bar,
            "B2bar": self.b2_bar,
            "B3bar": self.b3_bar,
            "c1": self.c1,
            "c2": self.c2,
            "dominates": self.dominates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurfaceFit":
        return cls(d["B1bar"], d["B2bar"], d["B3bar"], d["c1"], d["c2"], d["dominates"])


def _fit_plane(points: np.ndarray, y: np.ndarray, with_l1: bool) -> np.ndarray:
    """Least squares for y ~ -(p1*l1/2 + p2*l2/2 + c) or y ~ -(p3*l2 + c)."""
    if with_l1:
        design = np.column_stack([points[:, 0] / 2.0, points[:, 1] / 2.0,
                                  np.ones(len(points))])
    else:
        design = np.column_stack([points[:, 1], np.ones(len(points))])
    sol, *_ = np.linalg.lstsq(design, -y, rcond=None)
    return sol


def fit_dominating_surface(surface: RateSurface) -> SurfaceFit:
    """Two-plane fit of log2 e_F (mixed plane plus a pure-l2 plane, combined
    through a max), with both intercepts then shifted down by the minimal
    uniform amount making the fit dominate the data on every grid point."""
    items = sorted(surface.grid.items())
    pts_all = np.array([ell for ell, _ in items], dtype=float)
    vals_all = np.array([v[0] for _, v in items])
    positive = vals_all > 0
    if not positive.any():
        raise DegenerateSurfaceError("rate surface is identically zero; nothing to fit")
    if positive.sum() < 6:
        raise ValueError(f"need at least 6 positive surface points, got {int(positive.sum())}")
    pts = pts_all[positive]
    y = np.log2(vals_all[positive])

    a_par = _fit_plane(pts, y, with_l1=True)
    b_par = _fit_plane(pts, y, with_l1=False)
    assign = None
    for _ in range(200):
        a_vals = pts[:, 0] / 2.0 * a_par[0] + pts[:, 1] / 2.0 * a_par[1] + a_par[2]
        b_vals = pts[:, 1] * b_par[0] + b_par[1]
        new_assign = b_vals > a_vals  # active plane of the max
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        if (~assign).sum() >= 3:
            a_par = _fit_plane(pts[~assign], y[~assign], with_l1=True)
        if assign.sum() >= 2:
            b_par = _fit_plane(pts[assign], y[assign], with_l1=False)
        else:
            # no pure-l2 region: park the second plane along the first one's
            # l2 trace so it never becomes active
            b_par = np.array([a_par[1] / 2.0, a_par[2]])
    b1_bar, b2_bar, c1 = a_par[0], a_par[1], a_par[2]
    b3_bar, c2 = b_par[0], b_par[1]

    a_vals = pts[:, 0] / 2.0 * b1_bar + pts[:, 1] / 2.0 * b2_bar + c1
    b_vals = pts[:, 1] * b3_bar + c2
    shift = max(0.0, float(np.max(y + np.maximum(a_vals, b_vals))))
    c1 -= shift
    c2 -= shift

    fit = SurfaceFit(b1_bar, b2_bar, b3_bar, c1, c2, dominates=False)
    p = fit.evaluate(pts_all[:, 0], pts_all[:, 1])
    fit.dominates = bool(np.all(p >= vals_all * (1.0 - 1e-12)))
    return fit


# -- references ----------------------------------------------------------------


class ReferenceMode(enum.Enum):
    EXACT_ZERO = "exact-zero"
    PSEUDO_MIMC = "pseudo-mimc"


def compute_reference(
    problem: ProblemSpec,
    mode: Union[ReferenceMode, str],
    seed: int = 0,
    rates: Optional[RateParams] = None,
    epsilon_ref: float = DEFAULT_REFERENCE_EPSILON,
    zero_mean: bool = False,
    budget_cap: Optional[float] = None,
    full_output: bool = False,
):
    """Reference value for error measurement: the exact zero vector for
    problems declared zero-mean, or a pseudo-reference from a run at a
    tolerance well below the sweep's."""
    mode = ReferenceMode(mode) if not isinstance(mode, ReferenceMode) else mode
    if mode is ReferenceMode.EXACT_ZERO:
        if not zero_mean:
            raise ValueError("exact-zero reference requires a problem declared zero-mean")
        value = np.zeros(1)
        return (value, None) if full_output else value
    if rates is None:
        raise ValueError("pseudo reference requires rate parameters")
    output = run_mimc(
        problem, epsilon_ref, rates, seed,
        budget_cap=budget_cap, domain=DOMAIN_REFERENCE,
    )
    return (output.value, output) if full_output else output.value


# -- cost-versus-error sweeps ----------------------------------------------------


class Method(enum.Enum):
    MIMC1 = "MIMC1"
    MIMC2 = "MIMC2"
    MLMC = "MLMC"


@dataclass
class SweepRecord:
    method: str
    epsilon: float
    error_sq: float
    total_cost: float
    wall_time_s: float
    seed: int
    replicate: int


def _prepare_rates(method: Method, rates: RateParams) -> RateParams:
    if method is Method.MIMC2:
        if rates.variance is not VarianceModel.REDUCED:
            return RateParams(
                b1=rates.b1, b2=rates.b2, alpha1=rates.alpha1, alpha2=rates.alpha2,
                log_cost_exponent=rates.log_cost_exponent, kappa=rates.kappa,
                nu=rates.nu, variance=VarianceModel.REDUCED,
                level_rule=rates.level_rule,
            )
    return rates


def _error_sq(value, reference) -> float:
    if np.isscalar(value) and np.isscalar(reference):
        return float(value - reference) ** 2
    value = np.atleast_1d(np.asarray(value, dtype=float))
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    width = max(len(value), len(reference))
    return float(np.sum((pad_to(value, width) - pad_to(reference, width)) ** 2))


def _sweep_cell(args):
    (problem, method, eps, eps_idx, replicate, rates, seed, budget_cap,
     deterministic, reference) = args
    context = (DOMAIN_SWEEP, list(Method).index(method), eps_idx, replicate)
    start = time.perf_counter()
    if method is Method.MLMC:
        params = mlmc_params(
            eps, rates.kappa, rates.nu, rates.alpha1, rates.alpha2,
            rates.log_cost_exponent,
        )
        out = run_mlmc(problem, eps, params, seed, budget_cap=budget_cap,
                       domain=context)
    else:
        out = run_mimc(problem, eps, _prepare_rates(method, rates), seed,
                       budget_cap=budget_cap, domain=context)
    wall = 0.0 if deterministic else time.perf_counter() - start
    return SweepRecord(
        method=method.value,
        epsilon=eps,
        error_sq=_error_sq(out.value, reference),
        total_cost=out.total_cost,
        wall_time_s=wall,
        seed=seed,
        replicate=replicate,
    )


def cost_error_sweep(
    problem: ProblemSpec,
    methods: Sequence[Union[Method, str]],
    epsilons: Sequence[float],
    replicates: int,
    reference,
    seed: int,
    rates: RateParams,
    budget_cap: Optional[float] = None,
    deterministic: bool = False,
    threads: int = 1,
) -> tuple[list[SweepRecord], list[dict]]:
    """Run every (method, tolerance, replicate) cell, recording the squared
    norm of (estimate - reference), the accounted cost, and wall time.
    Failed cells are reported and skipped; the sweep continues."""
    methods = [Method(m) if not isinstance(m, Method) else m for m in methods]
    cells = []
    for method in methods:
        for eps_idx, eps in enumerate(epsilons):
            for rep in range(replicates):
                cells.append((problem, method, eps, eps_idx, rep, rates, seed,
                              budget_cap, deterministic, reference))
    records: list[SweepRecord] = []
    failures: list[dict] = []

    def handle(cell, result, error):
        if error is None:
            records.append(result)
        else:
            failures.append({
                "method": cell[1].value, "epsilon": cell[2],
                "replicate": cell[4], "error": str(error),
            })

    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_cell, c) for c in cells]
            for cell, fut in zip(cells, futures):
                try:
                    handle(cell, fut.result(), None)
                except Exception as exc:  # noqa: BLE001 - per-cell isolation
                    handle(cell, None, exc)
    else:
        for cell in cells:
            try:
                handle(cell, _sweep_cell(cell), None)
            except Exception as exc:  # noqa: BLE001 - per-cell isolation
                handle(cell, None, exc)
    records.sort(key=lambda r: (r.method, r.epsilon, r.replicate))
    return records, failures


def regression_slope(xs: Iterable[float], ys: Iterable[float]) -> float:
    """Least-squares slope of ys against xs."""
    xs = np.asarray(list(xs), dtype=float)
    ys = np.asarray(list(ys), dtype=float)
    design = np.column_stack([xs, np.ones(len(xs))])
    sol, *_ = np.linalg.lstsq(design, ys, rcond=None)
    return float(sol[0])


def cost_slopes(records: Sequence[SweepRecord]) -> dict:
    """Per-method regression slope of log2 total cost against log2(1/eps),
    averaging cost over replicates at each tolerance."""
    slopes = {}
    methods = sorted({r.method for r in records})
    for method in methods:
        by_eps: dict[float, list[float]] = {}
        for r in records:
            if r.method == method:
                by_eps.setdefault(r.epsilon, []).append(r.total_cost)
        eps = sorted(by_eps, reverse=True)
        xs = [math.log2(1.0 / e) for e in eps]
        ys = [math.log2(float(np.mean(by_eps[e]))) for e in eps]
        slopes[method] = regression_slope(xs, ys)
    return slopes


# -- persistence -----------------------------------------------------------------


RATES_CSV_HEADER = ["l1", "l2", "eF", "stderr", "m"]
SWEEP_CSV_HEADER = ["method", "epsilon", "error_sq", "cost", "walltime_s", "seed",
                    "replicate"]


def write_rates_csv(surface: RateSurface, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RATES_CSV_HEADER)
        for (l1, l2), (e_f, stderr, m) in sorted(surface.grid.items()):
            writer.writerow([l1, l2, repr(e_f), repr(stderr), m])


def read_rates_csv(path) -> RateSurface:
    grid = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RATES_CSV_HEADER:
            raise ValueError(
                f"bad rates CSV header {reader.fieldnames}, expected {RATES_CSV_HEADER}"
            )
        for row in reader:
            grid[(int(row["l1"]), int(row["l2"]))] = (
                float(row["eF"]), float(row["stderr"]), int(row["m"])
            )
    return RateSurface(grid)


def write_sweep_csv(records: Sequence[SweepRecord], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_CSV_HEADER)
        for r in records:
            writer.writerow([
                r.method, repr(r.epsilon), repr(r.error_sq), repr(r.total_cost),
                repr(r.wall_time_s), r.seed, r.replicate,
            ])


def read_sweep_csv(path) -> list[SweepRecord]:
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SWEEP_CSV_HEADER:
            raise ValueError(
                f"bad sweep CSV header {reader.fieldnames}, expected {SWEEP_CSV_HEADER}"
            )
        for row in reader:
            records.append(SweepRecord(
                method=row["method"],
                epsilon=float(row["epsilon"]),
                error_sq=float(row["error_sq"]),
                total_cost=float(row["cost"]),
                wall_time_s=float(row["walltime_s"]),
                seed=int(row["seed"]),
                replicate=int(row["replicate"]),
            ))
    return records


def write_fit_json(fit: SurfaceFit, path) -> None:
    with open(path, "w") as f:
        json.dump(fit.to_dict(), f, indent=2)
        f.write("\n")


def read_fit_json(path) -> SurfaceFit:
    with open(path) as f:
        return SurfaceFit.from_dict(json.load(f))
