"""Figure construction: a two-panel rate surface and a two-panel
error/cost comparison, both rendered purely from persisted files."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_fit, read_rates, read_sweep

# deterministic SVG ids so identical inputs give identical bytes
matplotlib.rcParams["svg.hashsalt"] = "spdemc-plots"


class FigureKind(enum.Enum):
    RATE_SURFACE = "rate-surface"
    COST_ERROR = "cost-error"


@dataclass
class FigureRequest:
    kind: FigureKind
    input_paths: Sequence[Path]
    output_path: Path
    format: str = "png"

    def __post_init__(self):
        if self.format not in ("png", "svg"):
            raise ValueError(f"unsupported format {self.format!r}")


def _surface_arrays(grid: dict):
    l1_max = max(l1 for l1, _ in grid)
    l2_max = max(l2 for _, l2 in grid)
    values = np.full((l1_max + 1, l2_max + 1), np.nan)
    for (l1, l2), (e_f, _, _) in grid.items():
        values[l1, l2] = math.log2(e_f) if e_f > 0 else np.nan
    return values


def _fit_surface(fit: dict, shape) -> np.ndarray:
    l1 = np.arange(shape[0])[:, None]
    l2 = np.arange(shape[1])[None, :]
    a = fit["B1bar"] * l1 / 2.0 + fit["B2bar"] * l2 / 2.0 + fit["c1"]
    b = fit["B3bar"] * l2 + fit["c2"]
    return -np.maximum(a, b)  # log2 of the dominating surface


def render_rate_surface(rates_csv, fit_json, output_path, fmt="png") -> dict:
    """Left: measured log2 e_F heatmap. Right: the fitted dominating surface
    on the same color scale. Returns metadata with the plotted value ranges."""
    grid = read_rates(rates_csv)
    fit = read_fit(fit_json)
    data = _surface_arrays(grid)
    model = _fit_surface(fit, data.shape)

    finite = data[np.isfinite(data)]
    lo = float(min(finite.min(), model.min())) if finite.size else float(model.min())
    hi = float(max(finite.max(), model.max())) if finite.size else float(model.max())

    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2), sharey=True)
    for ax, surf, title in (
        (axes[0], data, "measured  log2 e_F"),
        (axes[1], model, "dominating fit  log2 p"),
    ):
        im = ax.imshow(surf.T, origin="lower", vmin=lo, vmax=hi, cmap="viridis",
                       aspect="auto")
        ax.set_xlabel("time refinement l1")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.9)
    axes[0].set_ylabel("space refinement l2")
    dom = "dominates" if fit.get("dominates") else "does not dominate"
    fig.suptitle(
        f"rates ({fit['B1bar']:.2f}, {fit['B2bar']:.2f}, {fit['B3bar']:.2f}); "
        f"fit {dom} the data",
        fontsize=10,
    )
    fig.tight_layout()
    _save(fig, output_path, fmt)
    meta = {
        "data_range": (lo, hi),
        "csv_log2_min": float(finite.min()) if finite.size else None,
        "csv_log2_max": float(finite.max()) if finite.size else None,
        "points": len(grid),
    }
    return meta


def _regression_slope(xs, ys) -> Optional[float]:
    if len(set(xs)) < 2:
        return None
    design = np.column_stack([xs, np.ones(len(xs))])
    sol, *_ = np.linalg.lstsq(design, np.asarray(ys), rcond=None)
    return float(sol[0])


def render_cost_error(sweep_csv, output_path, fmt="png") -> dict:
    """Left: squared error vs tolerance with the eps^2 guide line. Right:
    cost vs 1/eps, log-log, regression slope annotated per method."""
    rows = read_sweep(sweep_csv)
    methods = sorted({r["method"] for r in rows})

    fig, (ax_err, ax_cost) = plt.subplots(1, 2, figsize=(10, 4.2))
    slopes: dict[str, Optional[float]] = {}
    for method in methods:
        mine = [r for r in rows if r["method"] == method]
        eps_values = sorted({r["epsilon"] for r in mine}, reverse=True)
        err_mean = [float(np.mean([r["error_sq"] for r in mine if r["epsilon"] == e]))
                    for e in eps_values]
        cost_mean = [float(np.mean([r["cost"] for r in mine if r["epsilon"] == e]))
                     for e in eps_values]
        ax_err.plot([r["epsilon"] for r in mine], [r["error_sq"] for r in mine],
                    "o", alpha=0.4, label=None)
        ax_err.plot(eps_values, err_mean, "-o", label=method)
        slope = _regression_slope([math.log2(1.0 / e) for e in eps_values],
                                  [math.log2(c) for c in cost_mean])
        slopes[method] = slope
        label = method if slope is None else f"{method} (slope {slope:.2f})"
        ax_cost.plot([1.0 / e for e in eps_values], cost_mean, "-o", label=label)

    if rows:
        eps_all = sorted({r["epsilon"] for r in rows})
        guide = np.array(eps_all)
        scale = min(r["error_sq"] for r in rows if r["error_sq"] > 0) \
            / min(eps_all) ** 2 if any(r["error_sq"] > 0 for r in rows) else 1.0
        ax_err.plot(guide, scale * guide**2, "k--", label="eps^2 guide")

    ax_err.set_xscale("log")
    ax_err.set_yscale("log")
    ax_err.set_xlabel("tolerance eps")
    ax_err.set_ylabel("squared error")
    ax_err.set_title("approximation error")
    ax_cost.set_xscale("log")
    ax_cost.set_yscale("log")
    ax_cost.set_xlabel("1/eps")
    ax_cost.set_ylabel("accounted cost")
    ax_cost.set_title("computational cost")
    if methods:
        ax_err.legend(fontsize=8)
        ax_cost.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, output_path, fmt)
    return {"methods": methods, "slopes": slopes, "rows": len(rows)}


def _save(fig, output_path, fmt) -> None:
    # strip volatile metadata so identical inputs give identical bytes
    metadata = {"Date": None} if fmt == "svg" else {"Software": None}
    fig.savefig(output_path, format=fmt, dpi=120, metadata=metadata)
    plt.close(fig)


def render(request: FigureRequest) -> dict:
    """Dispatch a figure request; returns the renderer's metadata."""
    if request.kind is FigureKind.RATE_SURFACE:
        if len(request.input_paths) != 2:
            raise SchemaError("rate-surface needs RATES.csv and FIT.json")
        return render_rate_surface(request.input_paths[0], request.input_paths[1],
                                   request.output_path, request.format)
    if len(request.input_paths) != 1:
        raise SchemaError("cost-error needs a single SWEEP.csv")
    return render_cost_error(request.input_paths[0], request.output_path,
                             request.format)
