"""Index sets, work/variance models, sample allocation, and the assembled
multi-index and multilevel Monte Carlo estimators.

The multi-index estimator averages coupled mixed differences over a
downward-closed triangular index set; the number of samples per index follows
the usual square-root work/variance trade-off. The multilevel estimator does
the same on a single-index hierarchy whose grid sequences are chosen from the
regularity parameters. Accounting is exact: the reported total cost is the
sum over indices of sample counts times the documented per-index cost model.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ProblemSpec, QoIFunctional
from .noise import LatticeBatchStream
from .solver import (
    DyadicGrids,
    Grids,
    _double_difference_batch,
    _pair_difference_batch,
    pad_to,
)

# Stream-key contexts: estimators and harness draws never collide.
DOMAIN_MIMC = 0
DOMAIN_MLMC = 1
DOMAIN_SURFACE = 2
DOMAIN_REFERENCE = 3

# Largest batch drawn at once, in lattice entries (~128 MiB of float64).
DEFAULT_CHUNK_ENTRIES = 1 << 24


class VarianceModel(enum.Enum):
    STANDARD = "standard"
    REDUCED = "reduced"
    MAX_RATE = "max_rate"


class BudgetExceededError(RuntimeError):
    """Projected cost exceeds the configured cap; carries a report of the
    allocation that would have run."""

    def __init__(self, projected_cost: float, cap: float, report: dict):
        super().__init__(
            f"projected cost {projected_cost:.3g} exceeds budget cap {cap:.3g}"
        )
        self.projected_cost = projected_cost
        self.cap = cap
        self.report = report


@dataclass(frozen=True)
class RateParams:
    """Strong (b1, b2) and weak (alpha1, alpha2) decay rates of the coupled
    differences, the cost log-exponent, and the variance-model choice.

    kappa and nu are the problem's regularity constants; they have no direct
    algorithmic role here beyond documenting where b2 = kappa*nu comes from
    and steering the multilevel grid sequences.
    """

    b1: float
    b2: float
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    log_cost_exponent: int = 0
    kappa: float = 1.0
    nu: Optional[float] = None
    variance: VarianceModel = VarianceModel.STANDARD
    # parameters of the general max-rate variance model (unused otherwise)
    theta: Optional[float] = None
    upsilon: Optional[float] = None
    level_rule: str = "plain"  # or "corrected": adds the log-log term

    def __post_init__(self):
        if self.b1 <= 0 or self.b2 <= 0:
            raise ValueError("strong rates must be positive")
        if self.log_cost_exponent not in (0, 1):
            raise ValueError("log cost exponent must be 0 or 1")
        if self.alpha1 is None:
            object.__setattr__(self, "alpha1", self.b1 / 2.0)
        if self.alpha2 is None:
            object.__setattr__(self, "alpha2", self.b2 / 2.0)
        if self.alpha1 < self.b1 / 2.0 or self.alpha2 < self.b2 / 2.0:
            raise ValueError("weak rates cannot be below half the strong rates")
        if self.variance is VarianceModel.MAX_RATE and (
            self.theta is None or self.upsilon is None
        ):
            raise ValueError("max-rate variance model requires theta and upsilon")
        if self.level_rule not in ("plain", "corrected"):
            raise ValueError(f"unknown level rule {self.level_rule!r}")

    def to_dict(self) -> dict:
        return {
            "b1": self.b1,
            "b2": self.b2,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "logCostExponent": self.log_cost_exponent,
            "kappa": self.kappa,
            "nu": self.nu,
            "varianceModel": self.variance.value,
            "levelRule": self.level_rule,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateParams":
        return cls(
            b1=d["b1"],
            b2=d["b2"],
            alpha1=d.get("alpha1"),
            alpha2=d.get("alpha2"),
            log_cost_exponent=d.get("logCostExponent", 0),
            kappa=d.get("kappa", 1.0),
            nu=d.get("nu"),
            variance=VarianceModel(d.get("varianceModel", "standard")),
            theta=d.get("theta"),
            upsilon=d.get("upsilon"),
            level_rule=d.get("levelRule", "plain"),
        )


@dataclass(frozen=True)
class IndexSet:
    """Triangle {l : xi1*l1 + xi2*l2 <= L} of resolution multi-indices."""

    members: tuple[tuple[int, int], ...]
    xi1: float
    xi2: float
    level: int

    def __contains__(self, ell) -> bool:
        return tuple(ell) in set(self.members)

    def satisfies_telescoping(self) -> bool:
        """Downward closure: west, south and southwest clamped neighbours of
        every member are members."""
        mem = set(self.members)
        for l1, l2 in mem:
            needed = {
                (max(l1 - 1, 0), l2),
                (l1, max(l2 - 1, 0)),
                (max(l1 - 1, 0), max(l2 - 1, 0)),
            }
            if not needed <= mem:
                return False
        return True


@dataclass(frozen=True)
class Allocation:
    counts: dict
    epsilon: float

    def total_cost(self, log_cost_exponent: int) -> float:
        return sum(
            m * cost_model(ell, log_cost_exponent) for ell, m in self.counts.items()
        )


def index_set_weights(rates: RateParams) -> tuple[float, float]:
    """Triangle slopes xi_j = alpha_j + (1 - b_j)/10."""
    xi1 = rates.alpha1 + (1.0 - rates.b1) / 10.0
    xi2 = rates.alpha2 + (1.0 - rates.b2) / 10.0
    if xi1 <= 0 or xi2 <= 0:
        raise ValueError(f"non-positive index-set weights ({xi1}, {xi2})")
    return xi1, xi2


def _level_for_epsilon(epsilon: float, rates: RateParams, xi1: float, xi2: float) -> int:
    if not 0 < epsilon < 1:
        raise ValueError(f"tolerance must be in (0, 1), got {epsilon}")
    if rates.level_rule == "plain":
        return max(math.ceil(math.log2(1.0 / epsilon)), 1)
    theta = max(xi1 / rates.alpha1, xi2 / rates.alpha2)
    log_term = math.log2(2.0 / epsilon)
    if math.isclose(xi1 / rates.alpha1, xi2 / rates.alpha2):
        return max(math.ceil(theta * (log_term + math.log2(theta * log_term))), 1)
    return max(math.ceil(theta * log_term), 1)


def build_index_set(
    rates: RateParams,
    epsilon: Optional[float] = None,
    level: Optional[int] = None,
) -> IndexSet:
    """Index set for a tolerance (level = max(ceil(log2(1/eps)), 1) under the
    plain rule) or for an explicit level."""
    xi1, xi2 = index_set_weights(rates)
    if level is None:
        if epsilon is None:
            raise ValueError("either epsilon or level is required")
        level = _level_for_epsilon(epsilon, rates, xi1, xi2)
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    members = []
    l2 = 0
    while xi2 * l2 <= level:
        l1 = 0
        while xi1 * l1 + xi2 * l2 <= level:
            members.append((l1, l2))
            l1 += 1
        l2 += 1
    return IndexSet(tuple(sorted(members)), xi1, xi2, level)


def variance_model(ell: tuple[int, int], rates: RateParams) -> float:
    """Modelled variance of the mixed difference at a multi-index.

    standard: 2**(-b1*l1 - b2*l2).
    reduced:  the sharper mixed bound 2**(-b2*l2 - l1) * min(1, 2**(-b2*l2 + l1))
              off the l1 = 0 axis, equal to standard there.
    max_rate: 2**(-b1*l1 - b2*l2 - theta*max(l1 - upsilon*l2, 0)).
    """
    l1, l2 = ell
    if rates.variance is VarianceModel.STANDARD:
        return 2.0 ** (-rates.b1 * l1 - rates.b2 * l2)
    if rates.variance is VarianceModel.REDUCED:
        if l1 == 0:
            return 2.0 ** (-rates.b2 * l2)
        return 2.0 ** (-rates.b2 * l2 - l1) * min(1.0, 2.0 ** (-rates.b2 * l2 + l1))
    excess = max(l1 - rates.upsilon * l2, 0.0)
    return 2.0 ** (-rates.b1 * l1 - rates.b2 * l2 - rates.theta * excess)


def cost_model(ell: tuple[int, int], log_cost_exponent: int) -> float:
    """Cost of one mixed-difference sample, in base-solve units:
    2**(l1+l2) * max(l2, 1)**l (clamped so the l2 = 0 row stays positive)."""
    l1, l2 = ell
    return 2.0 ** (l1 + l2) * float(max(l2, 1)) ** log_cost_exponent


def work_model(ell: tuple[int, int]) -> float:
    """Log-free cost 2**(l1+l2) used inside the sample-allocation optimizer."""
    return 2.0 ** (ell[0] + ell[1])


def allocate_samples(epsilon: float, index_set: IndexSet, rates: RateParams) -> Allocation:
    """Sample counts m_l = ceil(eps**-2 * sqrt(V_l/W_l) * sum_k sqrt(V_k W_k))
    with the log-free work model W inside the optimizer."""
    if not 0 < epsilon <= 1:
        raise ValueError(f"tolerance must be in (0, 1], got {epsilon}")
    pairs = [
        (ell, variance_model(ell, rates), work_model(ell)) for ell in index_set.members
    ]
    total = sum(math.sqrt(v * w) for _, v, w in pairs)
    counts = {
        ell: math.ceil(epsilon**-2 * math.sqrt(v / w) * total) for ell, v, w in pairs
    }
    return Allocation(counts, epsilon)


# -- multilevel parameter rules ----------------------------------------------


@dataclass(frozen=True)
class MlmcParams:
    """Level count and grid sequences for the multilevel estimator."""

    levels: int
    m_steps: tuple[int, ...]
    n_modes: tuple[int, ...]
    log_cost_exponent: int = 0

    def work(self, level: int) -> float:
        """Log-free per-sample work in base-solve units."""
        return (self.m_steps[level] * self.n_modes[level]) / (
            self.m_steps[0] * self.n_modes[0]
        )

    def cost(self, level: int) -> float:
        """Accounted per-sample cost: work times the transform log factor."""
        log_factor = max(math.log2(self.n_modes[level]), 1.0) ** self.log_cost_exponent
        return self.work(level) * log_factor


def _next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length() if n > 1 else 1


def mlmc_params(
    epsilon: float,
    kappa: float,
    nu: float,
    alpha1: float,
    alpha2: float,
    log_cost_exponent: int = 0,
) -> MlmcParams:
    """Grid sequences M_k = 2**(ceil(k/min(1,kappa)) + 1) and
    N_k = max(2, 2**k/(kappa nu)) rounded up to a power of two, with
    L = max(ceil(log2(1/eps)/abar), 1) for
    abar = min(alpha1/min(1,kappa), alpha2/(kappa nu))."""
    if not 0 < epsilon < 1:
        raise ValueError(f"tolerance must be in (0, 1), got {epsilon}")
    kmin = min(1.0, kappa)
    abar = min(alpha1 / kmin, alpha2 / (kappa * nu))
    levels = max(math.ceil(math.log2(1.0 / epsilon) / abar), 1)
    m_steps = tuple(1 << (math.ceil(k / kmin) + 1) for k in range(levels + 1))
    n_modes = tuple(
        max(2, _next_pow2(math.ceil(2.0 ** (k / (kappa * nu)))))
        for k in range(levels + 1)
    )
    return MlmcParams(levels, m_steps, n_modes, log_cost_exponent)


def mlmc_allocation(epsilon: float, params: MlmcParams) -> dict:
    """Per-level counts from the modelled variances V_l = 2**-l and the
    log-free work, by the same optimizer as the multi-index allocation."""
    variances = [2.0**-l for l in range(params.levels + 1)]
    works = [params.work(l) for l in range(params.levels + 1)]
    total = sum(math.sqrt(v * w) for v, w in zip(variances, works))
    return {
        l: math.ceil(epsilon**-2 * math.sqrt(v / w) * total)
        for l, (v, w) in enumerate(zip(variances, works))
    }


# -- assembled estimators ------------------------------------------------------


@dataclass
class IndexStats:
    mean_norm: float
    var_norm: float
    samples: int
    cost_units: float


@dataclass
class EstimatorOutput:
    value: object  # coefficient vector (ndarray) or scalar
    per_index: dict
    total_cost: float
    seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        value = self.value
        if isinstance(value, np.ndarray):
            value = value.tolist()
        table = [
            {
                "index": list(ell),
                "meanNorm": st.mean_norm,
                "varNorm": st.var_norm,
                "samples": st.samples,
                "costUnits": st.cost_units,
            }
            for ell, st in sorted(self.per_index.items())
        ]
        return {
            "value": value,
            "perIndex": table,
            "totalCost": self.total_cost,
            "seed": self.seed,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Accumulator:
    """Running sum of sample values plus first two moments of their norms."""

    def __init__(self, scalar: bool, width: int):
        self.sum = 0.0 if scalar else np.zeros(width)
        self.norm_sum = 0.0
        self.norm_sq_sum = 0.0
        self.count = 0

    def add(self, batch: np.ndarray, width: int) -> None:
        if batch.ndim == 1:
            self.sum += batch.sum()
            norms = np.abs(batch)
        else:
            self.sum = self.sum + pad_to(batch, width).sum(axis=0)
            norms = np.linalg.norm(batch, axis=1)
        self.norm_sum += float(norms.sum())
        self.norm_sq_sum += float((norms**2).sum())
        self.count += batch.shape[0]

    def stats(self) -> tuple[float, float]:
        mean = self.norm_sum / self.count
        if self.count > 1:
            var = max(self.norm_sq_sum - self.count * mean**2, 0.0) / (self.count - 1)
        else:
            var = 0.0
        return mean, var


def _check_budget(projected: float, budget_cap, counts, epsilon) -> None:
    if budget_cap is not None and projected > budget_cap:
        report = {
            "epsilon": epsilon,
            "projectedCost": projected,
            "counts": {str(k): v for k, v in sorted(counts.items())},
        }
        raise BudgetExceededError(projected, budget_cap, report)


def _context(domain) -> tuple:
    """Stream-key context: a lone domain id or a (domain, ...) tuple."""
    return tuple(domain) if isinstance(domain, (tuple, list)) else (domain,)


def _chunk_sizes(total: int, mode_count: int, steps: int, chunk_entries: int):
    per_sample = mode_count * (steps + 1)
    chunk = max(1, min(total, chunk_entries // per_sample))
    done = 0
    while done < total:
        b = min(chunk, total - done)
        yield b
        done += b


def run_mimc(
    problem: ProblemSpec,
    epsilon: float,
    rates: RateParams,
    seed: int,
    grids: Optional[Grids] = None,
    index_set: Optional[IndexSet] = None,
    budget_cap: Optional[float] = None,
    chunk_entries: int = DEFAULT_CHUNK_ENTRIES,
    domain=DOMAIN_MIMC,
) -> EstimatorOutput:
    """Multi-index estimator: mean of coupled mixed differences over the
    index set, with samples independent across (index, draw) through keyed
    counter-based streams."""
    grids = grids or DyadicGrids()
    index_set = index_set or build_index_set(rates, epsilon=epsilon)
    allocation = allocate_samples(epsilon, index_set, rates)
    counts = allocation.counts
    total_cost = allocation.total_cost(rates.log_cost_exponent)
    _check_budget(total_cost, budget_cap, counts, epsilon)

    scalar = problem.qoi.functional is QoIFunctional.LINEAR_FUNCTIONAL
    width = max(grids.n(l2) for _, l2 in index_set.members)
    value = 0.0 if scalar else np.zeros(width)
    per_index = {}
    for ell in index_set.members:
        l1, l2 = ell
        m_fine, k_modes = grids.m(l1), grids.n(l2)
        stream = LatticeBatchStream(problem, k_modes, m_fine,
                                    (seed, *_context(domain), l1, l2))
        acc = _Accumulator(scalar, grids.n(l2))
        for b in _chunk_sizes(counts[ell], k_modes, m_fine, chunk_entries):
            integrals, init = stream.next_batch(b)
            delta = _double_difference_batch(
                problem, ell, grids, integrals, stream.tau_fine, init
            )
            acc.add(delta, grids.n(l2))
        mean_norm, var_norm = acc.stats()
        cost = counts[ell] * cost_model(ell, rates.log_cost_exponent)
        per_index[ell] = IndexStats(mean_norm, var_norm, counts[ell], cost)
        if scalar:
            value += acc.sum / counts[ell]
        else:
            value = value + pad_to(acc.sum, width) / counts[ell]

    config = {
        "method": "mimc",
        "epsilon": epsilon,
        "rates": rates.to_dict(),
        "indexSet": {"xi1": index_set.xi1, "xi2": index_set.xi2, "level": index_set.level},
        "problem": problem.to_dict(),
    }
    return EstimatorOutput(value, per_index, total_cost, seed, config)


def run_mlmc(
    problem: ProblemSpec,
    epsilon: float,
    params: MlmcParams,
    seed: int,
    budget_cap: Optional[float] = None,
    chunk_entries: int = DEFAULT_CHUNK_ENTRIES,
    domain=DOMAIN_MLMC,
) -> EstimatorOutput:
    """Multilevel estimator: telescoping sum of coupled pair differences."""
    counts = mlmc_allocation(epsilon, params)
    total_cost = sum(m * params.cost(l) for l, m in counts.items())
    _check_budget(total_cost, budget_cap, counts, epsilon)

    scalar = problem.qoi.functional is QoIFunctional.LINEAR_FUNCTIONAL
    width = max(params.n_modes)
    value = 0.0 if scalar else np.zeros(width)
    per_index = {}
    for level in range(params.levels + 1):
        m_fine, n_fine = params.m_steps[level], params.n_modes[level]
        coarse = None
        if level > 0:
            coarse = (params.m_steps[level - 1], params.n_modes[level - 1])
        stream = LatticeBatchStream(problem, n_fine, m_fine,
                                    (seed, *_context(domain), level))
        acc = _Accumulator(scalar, n_fine)
        for b in _chunk_sizes(counts[level], n_fine, m_fine, chunk_entries):
            integrals, init = stream.next_batch(b)
            delta = _pair_difference_batch(
                problem, (m_fine, n_fine), coarse, integrals, stream.tau_fine, init
            )
            acc.add(delta, n_fine)
        mean_norm, var_norm = acc.stats()
        per_index[(level,)] = IndexStats(
            mean_norm, var_norm, counts[level], counts[level] * params.cost(level)
        )
        if scalar:
            value += acc.sum / counts[level]
        else:
            value = value + pad_to(acc.sum, width) / counts[level]

    config = {
        "method": "mlmc",
        "epsilon": epsilon,
        "levels": params.levels,
        "mSteps": list(params.m_steps),
        "nModes": list(params.n_modes),
        "problem": problem.to_dict(),
    }
    return EstimatorOutput(value, per_index, total_cost, seed, config)
