"""Problem definitions for semilinear parabolic SPDEs in spectral form.

A problem is specified by the spectrum of the linear operator, the covariance
coefficients of the driving noise together with the affine multiplicative
coupling, a drift term, an initial condition, a time horizon, and the quantity
of interest evaluated on the solution. All specs are immutable and safe to
share across threads; sequences such as eigenvalues are computed on demand
rather than tabulated.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# Below this value of x = lambda*tau the ratio (1 - e^-x)/x is evaluated by a
# 4-term Taylor series; direct evaluation loses digits to cancellation.
SMALL_ARGUMENT_THRESHOLD = 1e-5


@dataclass(frozen=True)
class SpectrumSpec:
    """Eigenvalue rule lambda_k = scale * k**exponent, k >= 1."""

    scale: float
    exponent: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"spectrum scale must be positive, got {self.scale}")
        if self.exponent <= 0:
            raise ValueError(f"spectrum exponent must be positive, got {self.exponent}")

    def lambdas(self, count: int) -> np.ndarray:
        """First `count` eigenvalues as an array."""
        k = np.arange(1, count + 1, dtype=float)
        return self.scale * k**self.exponent


class ZetaRule(enum.Enum):
    RECIPROCAL_SQRT_MU = "reciprocal_sqrt_mu"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise covariance mu_k = mu_scale * k**(-mu_exponent), multiplicative
    weights zeta_k and the spectral shift of the coupling term.

    Under the reciprocal rule zeta_k = mu_k**(-1/2), so sqrt(mu_k)*zeta_k == 1
    exactly; solvers consume that product through `sqrt_mu_zeta`, which returns
    exact ones. The explicit rule substitutes a given sequence (zero-padded).
    mu_scale = 0 switches the noise off entirely (mainly for exactness tests).
    """

    mu_exponent: float
    zeta_rule: ZetaRule = ZetaRule.RECIPROCAL_SQRT_MU
    zeta_values: Optional[tuple[float, ...]] = None
    shift: int = 0
    mu_scale: float = 1.0

    def __post_init__(self):
        if self.mu_exponent <= 1:
            raise ValueError(
                f"mu exponent must exceed 1 for a summable covariance, got {self.mu_exponent}"
            )
        if self.shift < 0 or self.shift != int(self.shift):
            raise ValueError(f"shift must be a non-negative integer, got {self.shift}")
        if self.zeta_rule is ZetaRule.EXPLICIT and self.zeta_values is None:
            raise ValueError("explicit zeta rule requires zeta_values")
        if self.mu_scale < 0:
            raise ValueError(f"mu scale must be non-negative, got {self.mu_scale}")

    def mu(self, count: int) -> np.ndarray:
        k = np.arange(1, count + 1, dtype=float)
        return self.mu_scale * k**-self.mu_exponent

    def zeta(self, count: int) -> np.ndarray:
        if self.zeta_rule is ZetaRule.RECIPROCAL_SQRT_MU:
            if self.mu_scale == 0:
                raise ValueError("reciprocal zeta is undefined for zero noise scale")
            return self.mu(count) ** -0.5
        out = np.zeros(count)
        vals = self.zeta_values or ()
        out[: min(count, len(vals))] = vals[:count]
        return out

    def sqrt_mu_zeta(self, count: int) -> np.ndarray:
        """The product sqrt(mu_k) * zeta_k, exact under the reciprocal rule."""
        if self.zeta_rule is ZetaRule.RECIPROCAL_SQRT_MU:
            fill = 1.0 if self.mu_scale > 0 else 0.0
            return np.full(count, fill)
        return np.sqrt(self.mu(count)) * self.zeta(count)


class DriftKind(enum.Enum):
    ZERO = "zero"
    LINEAR_SCALE = "linear_scale"
    NEMYTSKII_SINE_PLUS_ID = "nemytskii_sine_plus_id"
    NEMYTSKII_CUSTOM = "nemytskii_custom"


@dataclass(frozen=True)
class DriftSpec:
    """Drift term. Zero, a scalar multiple of the state, or a pointwise
    (Nemytskii) composition evaluated pseudospectrally on an oversampled grid.
    """

    kind: DriftKind = DriftKind.ZERO
    linear_scale: float = 0.0
    pointwise: Optional[Callable[[np.ndarray], np.ndarray]] = None
    oversample: int = 4

    def __post_init__(self):
        if self.oversample < 2 or self.oversample & (self.oversample - 1):
            raise ValueError(f"oversample must be a power of two >= 2, got {self.oversample}")
        if self.kind is DriftKind.NEMYTSKII_CUSTOM and self.pointwise is None:
            raise ValueError("custom Nemytskii drift requires a pointwise function")

    @property
    def is_nemytskii(self) -> bool:
        return self.kind in (DriftKind.NEMYTSKII_SINE_PLUS_ID, DriftKind.NEMYTSKII_CUSTOM)

    def pointwise_function(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind is DriftKind.NEMYTSKII_SINE_PLUS_ID:
            return lambda u: np.sin(u) + u
        if self.kind is DriftKind.NEMYTSKII_CUSTOM:
            assert self.pointwise is not None
            return self.pointwise
        raise ValueError(f"{self.kind} has no pointwise function")


class InitKind(enum.Enum):
    COEFFICIENT_LIST = "coefficient_list"
    DECAYING_GAUSSIAN = "decaying_gaussian"
    HAT_FUNCTION = "hat_function"


@dataclass(frozen=True)
class InitSpec:
    """Initial condition.

    COEFFICIENT_LIST: fixed coefficients in the eigenbasis.
    DECAYING_GAUSSIAN: random X0 = sum_k xi_k k**(-decay) e_k, xi_k iid N(0,1),
        drawn once per sample and shared by all coupled solves.
    HAT_FUNCTION: X0(x) = 2*min(x, 1-x) expanded in the Dirichlet sine basis
        e_k(x) = sqrt(2) sin(k pi x) on [0, 1].
    """

    kind: InitKind
    coefficients: tuple[float, ...] = ()
    decay: float = 2.0

    def __post_init__(self):
        if self.kind is InitKind.DECAYING_GAUSSIAN and self.decay <= 0.5:
            raise ValueError("decay must exceed 1/2 for square-summable coefficients")

    @property
    def is_random(self) -> bool:
        return self.kind is InitKind.DECAYING_GAUSSIAN

    def deterministic_coefficients(self, count: int) -> np.ndarray:
        """Coefficients of the non-random part (zero for the Gaussian init)."""
        if self.kind is InitKind.COEFFICIENT_LIST:
            out = np.zeros(count)
            n = min(count, len(self.coefficients))
            out[:n] = self.coefficients[:n]
            return out
        if self.kind is InitKind.HAT_FUNCTION:
            # <2 min(x,1-x), sqrt(2) sin(k pi x)> = 4 sqrt(2) sin(k pi / 2) / (pi k)^2
            k = np.arange(1, count + 1, dtype=float)
            return 4.0 * math.sqrt(2.0) * np.sin(k * np.pi / 2.0) / (np.pi * k) ** 2
        return np.zeros(count)

    def gaussian_scale(self, count: int) -> np.ndarray:
        """Per-mode standard deviations multiplying the iid normals."""
        if self.kind is not InitKind.DECAYING_GAUSSIAN:
            return np.zeros(count)
        k = np.arange(1, count + 1, dtype=float)
        return k**-self.decay


class QoIForm(enum.Enum):
    TERMINAL = "terminal"
    TIME_INTEGRAL = "time_integral"


class QoIFunctional(enum.Enum):
    IDENTITY = "identity"
    LINEAR_FUNCTIONAL = "linear_functional"


@dataclass(frozen=True)
class QoISpec:
    """Quantity of interest: the state itself or a linear functional of it,
    evaluated at the terminal time or integrated over [0, T] with the
    left-endpoint rule."""

    form: QoIForm = QoIForm.TERMINAL
    functional: QoIFunctional = QoIFunctional.IDENTITY
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.functional is QoIFunctional.LINEAR_FUNCTIONAL and not self.weights:
            raise ValueError("linear functional requires a weight vector")

    @property
    def is_scalar(self) -> bool:
        return self.functional is QoIFunctional.LINEAR_FUNCTIONAL


@dataclass(frozen=True)
class ProblemSpec:
    """One full SPDE instance."""

    spectrum: SpectrumSpec
    noise: NoiseSpec
    drift: DriftSpec = field(default_factory=DriftSpec)
    init: InitSpec = field(default_factory=lambda: InitSpec(InitKind.COEFFICIENT_LIST, (1.0,)))
    horizon: float = 1.0
    qoi: QoISpec = field(default_factory=QoISpec)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    # -- JSON document ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "spectrum": {"scale": self.spectrum.scale, "exponent": self.spectrum.exponent},
            "noise": {
                "muExponent": self.noise.mu_exponent,
                "zetaRule": self.noise.zeta_rule.value,
                "shift": self.noise.shift,
                "muScale": self.noise.mu_scale,
            },
            "drift": {"kind": self.drift.kind.value, "oversample": self.drift.oversample},
            "init": {"kind": self.init.kind.value},
            "horizon": self.horizon,
            "qoi": {"form": self.qoi.form.value, "functional": self.qoi.functional.value},
        }
        if self.noise.zeta_values is not None:
            d["noise"]["zetaValues"] = list(self.noise.zeta_values)
        if self.drift.kind is DriftKind.LINEAR_SCALE:
            d["drift"]["linearScale"] = self.drift.linear_scale
        if self.drift.kind is DriftKind.NEMYTSKII_CUSTOM:
            raise ValueError("custom pointwise drift is not serializable")
        if self.init.kind is InitKind.COEFFICIENT_LIST:
            d["init"]["coefficients"] = list(self.init.coefficients)
        if self.init.kind is InitKind.DECAYING_GAUSSIAN:
            d["init"]["decay"] = self.init.decay
        if self.qoi.weights:
            d["qoi"]["weights"] = list(self.qoi.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        spectrum = SpectrumSpec(d["spectrum"]["scale"], d["spectrum"]["exponent"])
        nd = d["noise"]
        noise = NoiseSpec(
            mu_exponent=nd["muExponent"],
            zeta_rule=ZetaRule(nd.get("zetaRule", "reciprocal_sqrt_mu")),
            zeta_values=tuple(nd["zetaValues"]) if "zetaValues" in nd else None,
            shift=nd.get("shift", 0),
            mu_scale=nd.get("muScale", 1.0),
        )
        dd = d.get("drift", {"kind": "zero"})
        drift = DriftSpec(
            kind=DriftKind(dd["kind"]),
            linear_scale=dd.get("linearScale", 0.0),
            oversample=dd.get("oversample", 4),
        )
        idd = d["init"]
        init = InitSpec(
            kind=InitKind(idd["kind"]),
            coefficients=tuple(idd.get("coefficients", ())),
            decay=idd.get("decay", 2.0),
        )
        qd = d.get("qoi", {})
        qoi = QoISpec(
            form=QoIForm(qd.get("form", "terminal")),
            functional=QoIFunctional(qd.get("functional", "identity")),
            weights=tuple(qd.get("weights", ())),
        )
        return cls(spectrum=spectrum, noise=noise, drift=drift, init=init,
                   horizon=d.get("horizon", 1.0), qoi=qoi)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))


# -- elementary operations --------------------------------------------------


def eigenvalue(spec: SpectrumSpec, k: int) -> float:
    """k-th eigenvalue of the linear operator, k >= 1."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    return spec.scale * float(k) ** spec.exponent


def noise_coefficients(spec: NoiseSpec, k: int) -> tuple[float, float]:
    """(mu_k, zeta_k) for mode k >= 1."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    mu = float(k) ** -spec.mu_exponent
    if spec.zeta_rule is ZetaRule.RECIPROCAL_SQRT_MU:
        zeta = mu**-0.5
    else:
        vals = spec.zeta_values or ()
        zeta = float(vals[k - 1]) if k <= len(vals) else 0.0
    return mu, zeta


def semigroup_factor(lam: float, t: float) -> float:
    """e**(-lam*t), the action of the semigroup on one mode."""
    if lam < 0:
        raise ValueError(f"rate must be non-negative, got {lam}")
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return math.exp(-lam * t)


def _one_minus_exp_ratio(x):
    """(1 - e**(-x)) / x with a series branch for small x.

    Vectorized; x >= 0. The series keeps four terms, accurate to ~x^4/120
    relative below the threshold.
    """
    x = np.asarray(x, dtype=float)
    small = x < SMALL_ARGUMENT_THRESHOLD
    # avoid 0/0 in the masked-out branch
    safe = np.where(small, 1.0, x)
    direct = -np.expm1(-safe) / safe
    series = 1.0 - x / 2.0 + x**2 / 6.0 - x**3 / 24.0
    return np.where(small, series, direct)


def phi1_factor(lam: float, tau: float) -> float:
    """Integral of the semigroup over one step: (1 - e**(-lam*tau)) / lam.

    Limits to tau as lam -> 0; evaluated by series below the small-argument
    threshold to avoid catastrophic cancellation.
    """
    if tau <= 0:
        raise ValueError(f"step must be positive, got {tau}")
    if lam < 0:
        raise ValueError(f"rate must be non-negative, got {lam}")
    return tau * float(_one_minus_exp_ratio(lam * tau))


def phi1_factors(lambdas: np.ndarray, tau: float) -> np.ndarray:
    """Vectorized phi1_factor over an array of rates."""
    return tau * _one_minus_exp_ratio(np.asarray(lambdas) * tau)
