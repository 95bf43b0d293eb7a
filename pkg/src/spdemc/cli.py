"""Command-line entry point for the experiment workflows.

Subcommands mirror the harness one-to-one: `rates` (surface + fit), `sweep`
(cost versus error), `estimate` (one estimator run), `reference` (reference
value), and `validate` (fast invariant checks). Exit codes: 0 success,
1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .estimator import RateParams, run_mimc, run_mlmc, mlmc_params
from .harness import (
    Method,
    ReferenceMode,
    compute_reference,
    cost_error_sweep,
    cost_slopes,
    estimate_rate_surface,
    fit_dominating_surface,
    get_preset,
    write_fit_json,
    write_rates_csv,
    write_sweep_csv,
)
from .model import ProblemSpec

USAGE_ERROR = 1
RUNTIME_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdemc",
        description="Spectral SPDE Monte Carlo experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("rates", "estimate the mixed-difference rate surface and fit it"),
        ("sweep", "cost-versus-error sweep over methods and tolerances"),
        ("estimate", "run one estimator at one tolerance"),
        ("reference", "compute and persist a reference value"),
        ("validate", "run the fast invariant suite"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, help="JSON config file")
        cmd.add_argument("--seed", type=int, default=None, help="global seed")
        cmd.add_argument("--out", type=Path, default=Path("results"),
                         help="output directory")
        cmd.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        cmd.add_argument("--deterministic", action="store_true",
                         help="byte-identical outputs for a fixed seed")
        cmd.add_argument("--budget-cap", type=float, default=None,
                         help="abort when projected cost exceeds this many units")
        cmd.add_argument("--epsilon", type=float, action="append", default=None,
                         help="tolerance (repeatable)")
        cmd.add_argument("--method", action="append", default=None,
                         choices=[m.value for m in Method],
                         help="estimator method (repeatable)")
    return parser


class _Config:
    """Resolved run configuration: problem, rates, and harness options."""

    def __init__(self, data: dict, args):
        self.data = data
        problem = data.get("problem", {"preset": "linear_nu43"})
        if "preset" in problem:
            preset = get_preset(problem["preset"])
            self.problem = preset.problem
            self.rates = preset.rates
            self.zero_mean = preset.zero_mean
        else:
            self.problem = ProblemSpec.from_dict(problem)
            self.rates = None
            self.zero_mean = bool(data.get("zeroMean", False))
        if "rates" in data:
            self.rates = RateParams.from_dict(data["rates"])
        if self.rates is None:
            raise ValueError("config must provide rates unless a preset is used")
        self.methods = args.method or data.get("methods", ["MIMC1"])
        self.epsilons = args.epsilon or data.get("epsilons", [2.0**-3])
        self.replicates = int(data.get("replicates", 1))
        seeds = data.get("seeds", [0])
        self.seed = args.seed if args.seed is not None else int(seeds[0])
        self.budget_cap = (
            args.budget_cap if args.budget_cap is not None else data.get("budgetCap")
        )
        self.out_dir = Path(data["outputDir"]) if "outputDir" in data and args.out == Path("results") else args.out
        self.reference = data.get("reference")
        self.surface = data.get("surface", {})
        self.deterministic = bool(args.deterministic or data.get("deterministic", False))
        self.threads = args.threads


def _load_config(args) -> _Config:
    data = {}
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config) as f:
            data = json.load(f)
    return _Config(data, args)


def _resolve_reference(cfg: _Config):
    spec = cfg.reference or (
        {"mode": "exact-zero"} if cfg.zero_mean else {"mode": "pseudo-mimc"}
    )
    mode = ReferenceMode(spec.get("mode", "exact-zero"))
    if mode is ReferenceMode.EXACT_ZERO:
        return compute_reference(cfg.problem, mode, zero_mean=cfg.zero_mean)
    eps_ref = float(spec.get("epsilon", harness.DEFAULT_REFERENCE_EPSILON))
    return compute_reference(
        cfg.problem, mode, cfg.seed + 1, rates=cfg.rates, epsilon_ref=eps_ref,
        budget_cap=cfg.budget_cap,
    )


def _cmd_rates(args) -> int:
    cfg = _load_config(args)
    surface = estimate_rate_surface(
        cfg.problem,
        max_level=int(cfg.surface.get("maxLevel", 5)),
        samples=int(cfg.surface.get("samples", harness.DEFAULT_SURFACE_SAMPLES)),
        seed=cfg.seed,
        budget_cap=cfg.budget_cap,
        log_cost_exponent=cfg.rates.log_cost_exponent,
        threads=cfg.threads,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_rates_csv(surface, cfg.out_dir / "rates.csv")
    try:
        fit = fit_dominating_surface(surface)
        write_fit_json(fit, cfg.out_dir / "fit.json")
        print(f"fit: B1bar={fit.b1_bar:.4f} B2bar={fit.b2_bar:.4f} "
              f"B3bar={fit.b3_bar:.4f} dominates={fit.dominates}")
    except harness.DegenerateSurfaceError as exc:
        with open(cfg.out_dir / "fit.json", "w") as f:
            json.dump({"degenerate": True, "reason": str(exc)}, f, indent=2)
        print(f"surface degenerate, no fit: {exc}")
    print(f"wrote {cfg.out_dir / 'rates.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    reference = _resolve_reference(cfg)
    records, failures = cost_error_sweep(
        cfg.problem, cfg.methods, cfg.epsilons, cfg.replicates, reference,
        cfg.seed, cfg.rates, budget_cap=cfg.budget_cap,
        deterministic=cfg.deterministic, threads=cfg.threads,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(records, cfg.out_dir / "sweep.csv")
    for failure in failures:
        print(f"failed cell: {failure}", file=sys.stderr)
    if records:
        for method, slope in sorted(cost_slopes(records).items()):
            print(f"cost slope {method}: {slope:.3f}")
    print(f"wrote {cfg.out_dir / 'sweep.csv'} ({len(records)} records, "
          f"{len(failures)} failures)")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _load_config(args)
    method = Method(cfg.methods[0])
    eps = float(cfg.epsilons[0])
    if method is Method.MLMC:
        params = mlmc_params(eps, cfg.rates.kappa, cfg.rates.nu,
                             cfg.rates.alpha1, cfg.rates.alpha2,
                             cfg.rates.log_cost_exponent)
        out = run_mlmc(cfg.problem, eps, params, cfg.seed, budget_cap=cfg.budget_cap)
    else:
        out = run_mimc(cfg.problem, eps, harness._prepare_rates(method, cfg.rates),
                       cfg.seed, budget_cap=cfg.budget_cap)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "estimate.json"
    with open(path, "w") as f:
        f.write(out.to_json())
        f.write("\n")
    norm = float(np.linalg.norm(np.atleast_1d(out.value)))
    print(f"estimate norm {norm:.6g}, total cost {out.total_cost:.6g}")
    print(f"wrote {path}")
    return 0


def _cmd_reference(args) -> int:
    cfg = _load_config(args)
    spec = cfg.reference or (
        {"mode": "exact-zero"} if cfg.zero_mean else {"mode": "pseudo-mimc"}
    )
    mode = ReferenceMode(spec.get("mode", "exact-zero"))
    eps_ref = float(spec.get("epsilon", harness.DEFAULT_REFERENCE_EPSILON))
    value, output = compute_reference(
        cfg.problem, mode, cfg.seed, rates=cfg.rates, epsilon_ref=eps_ref,
        zero_mean=cfg.zero_mean, budget_cap=cfg.budget_cap, full_output=True,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "mode": mode.value,
        "value": np.atleast_1d(np.asarray(value, dtype=float)).tolist(),
        "problem": cfg.problem.to_dict(),
    }
    if output is not None:
        doc["epsilon"] = eps_ref
        doc["totalCost"] = output.total_cost
        doc["seed"] = output.seed
    path = cfg.out_dir / "reference.json"
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    print(f"wrote {path}")
    return 0


# -- fast invariant suite -------------------------------------------------------


def _validate_checks() -> list[tuple[str, bool, str]]:
    from dataclasses import replace

    from .model import DriftSpec, InitKind, InitSpec, SpectrumSpec
    from .noise import NoiseLattice, coarsen, lattice_from_lambdas, sample_lattice
    from .solver import (
        DyadicGrids,
        coeffs_to_grid,
        double_difference,
        grid_to_coeffs,
        h_norm,
        pad_to,
        solve,
    )

    checks = []
    spectrum = SpectrumSpec(scale=0.2, exponent=4.0 / 3.0)

    lattice = lattice_from_lambdas(spectrum.lambdas(4), 1.0 / 8.0, 8, (123, 9))
    twice = coarsen(coarsen(lattice, spectrum, 2), spectrum, 2)
    once = coarsen(lattice, spectrum, 4)
    rel = np.max(np.abs(twice.integrals - once.integrals)) / max(
        np.max(np.abs(once.integrals)), 1e-300
    )
    checks.append(("noise aggregation identity", rel < 1e-13, f"rel err {rel:.2e}"))

    preset = get_preset("linear_nu43")
    problem = preset.problem
    det_problem = replace(
        problem,
        drift=DriftSpec(),
        init=InitSpec(InitKind.COEFFICIENT_LIST, (1.0, 0.5, 0.25, 0.125)),
    )
    zero_lat = NoiseLattice(4, 8, 1.0 / 8.0, np.zeros((4, 8)), (0,))
    res = solve(det_problem, 8, 4, zero_lat)
    expected = det_problem.init.deterministic_coefficients(4) * np.exp(
        -spectrum.lambdas(4) * det_problem.horizon
    )
    err = np.max(np.abs(res.terminal.coeffs - expected))
    checks.append(("semigroup exactness", err < 1e-12, f"max err {err:.2e}"))

    rng = np.random.default_rng(7)
    vec = rng.standard_normal(64)
    back = grid_to_coeffs(coeffs_to_grid(vec, 256), 64)
    rel = np.max(np.abs(back - vec)) / np.max(np.abs(vec))
    checks.append(("sine transform round trip", rel < 1e-12, f"rel err {rel:.2e}"))

    grids = DyadicGrids()
    lat = sample_lattice(problem, grids.n(3), grids.m(3), (2024, 1, 0))
    total = np.zeros(grids.n(3))
    for l1 in range(4):
        for l2 in range(4):
            total += pad_to(double_difference(problem, (l1, l2), grids, lat),
                            grids.n(3))
    direct = solve(problem, grids.m(3), grids.n(3), lat).qoi_value
    err = h_norm(total - direct)
    checks.append(("per-path telescoping", err < 1e-10, f"H-norm err {err:.2e}"))
    return checks


def _cmd_validate(args) -> int:
    checks = _validate_checks()
    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        all_ok &= ok
    return 0 if all_ok else RUNTIME_ERROR


_COMMANDS = {
    "rates": _cmd_rates,
    "sweep": _cmd_sweep,
    "estimate": _cmd_estimate,
    "reference": _cmd_reference,
    "validate": _cmd_validate,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; --help exits 0
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - boundary of the CLI
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
