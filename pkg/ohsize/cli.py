"""Command-line front end: ``ohsize <subcommand>`` with file-based inputs and outputs.

Every run writes its artifacts plus ``manifest.json`` (checksums included) to
``--out``. Exit codes: 0 success, 2 user or domain error, 3 internal numerical
failure; failures print ``error_kind=<kind>`` on stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ohsize.config import ConfigError, configure_logging, grid_size, set_grid_size, set_log_level
from ohsize.core.assumptions import check_assumptions
from ohsize.core.cost_model import (
    cost_table,
    default_grid,
    double_descent_curve,
    find_ohs_grid,
    find_ohs_root,
)
from ohsize.errors import DomainError, OHSError
from ohsize.estimators.emulator import run_emulation_algorithm
from ohsize.estimators.parametric import asymptotic_ci, bootstrap_ci, fit_power_law, next_point_parametric
from ohsize.scenarios.aspre import run_aspre_pipeline
from ohsize.services.oracle import ReplayOracle, SubprocessOracle
from ohsize.simulation.cost_structure import flattening_point, simulate_cost_structure
from ohsize.simulation.drift import holdout_spike_fraction, post_update_means, simulate_dominance
from ohsize.types.aspre import AspreParams
from ohsize.types.cost import CostParameters, GaussianBump, PowerLawTheta
from ohsize.types.emulation import GPConfig
from ohsize.types.manifest import RunManifest
from ohsize.types.observations import ObservationSet, ThetaFit
from ohsize.types.result import OHSResult
from ohsize.types.simulation import CostStructureConfig, PopulationConfig
from ohsize.utils.io import (
    parse_model,
    read_curve_csv,
    read_curve_table,
    read_json,
    read_observations_csv,
    sha256_file,
    write_frame,
    write_json,
)
from ohsize.utils.random import derive_int_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunContext:
    """Output directory plus the artifacts written so far."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]) -> None:
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[Path] = []

    @property
    def seed(self) -> int:
        return self.args.seed

    def json(self, name: str, payload: Dict[str, Any]) -> None:
        self.artifacts.append(write_json(self.out / name, payload))

    def frame(self, name: str, frame: pd.DataFrame) -> None:
        self.artifacts.append(write_frame(self.out / name, frame))

    def write_manifest(self, config_path: Optional[str]) -> None:
        manifest = RunManifest(
            subcommand=self.args.command,
            config_path=config_path,
            seed=self.seed,
            output_dir=str(self.out),
            argv=self.argv,
            artifacts={path.name: sha256_file(path) for path in self.artifacts},
        )
        write_json(self.out / MANIFEST_NAME, manifest.model_dump())


def _oracle(args: argparse.Namespace) -> Optional[SubprocessOracle]:
    return SubprocessOracle(args.oracle_cmd) if args.oracle_cmd else None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ohs(ctx: RunContext) -> Optional[str]:
    args = ctx.args
    payload = read_json(args.config)
    params = parse_model(payload, CostParameters.from_json_dict, args.config)
    grid = default_grid(params.N, grid_size())
    curve = None
    if args.curve:
        curve = read_curve_csv(args.curve)
    elif "bump" in payload:
        bump = parse_model(payload["bump"], lambda p: GaussianBump(**p), args.config)
        curve = double_descent_curve(params.theta, bump)
    if curve is not None or args.method == "grid":
        result = find_ohs_grid(params, curve=curve, grid=grid)
    else:
        result = find_ohs_root(params)
    ctx.json("ohs.json", result.to_json_dict())
    ctx.frame("cost_curve.csv", cost_table(params, curve=curve, grid=grid))
    print(f"n_star={result.n_star} min_cost={result.min_cost:.6g}")
    return args.config


def _fit(obs: ObservationSet, args: argparse.Namespace, init: Optional[PowerLawTheta] = None) -> ThetaFit:
    return fit_power_law(obs, init=init, k1=args.k1, N=args.N, k1_se=args.k1_se, N_se=args.N_se)


def cmd_fit_parametric(ctx: RunContext) -> Optional[str]:
    args = ctx.args
    obs = read_observations_csv(args.observations, N=args.N)
    fit = _fit(obs, args)

    if args.next_points:
        oracle = _oracle(args)
        if oracle is None:
            raise DomainError("--next-points needs --oracle-cmd")
        candidates = default_grid(args.N, min(grid_size(), 50))
        rows = []
        for it in range(1, args.next_points + 1):
            n_next = next_point_parametric(
                obs, fit, candidates=candidates, seed=derive_int_seed(ctx.seed, it), alpha=args.alpha
            )
            value, variance = oracle(n_next)
            obs = obs.append(n_next, value, variance)
            fit = _fit(obs, args, init=fit.theta)
            rows.append({"iter": it, "n_acquired": n_next, "value": value, "variance": variance})
        ctx.frame("acquisitions.csv", pd.DataFrame(rows, columns=["iter", "n_acquired", "value", "variance"]))
        ctx.frame("observations.csv", pd.DataFrame({"n": obs.sizes, "value": obs.values, "variance": obs.variances}))

    params = CostParameters(N=args.N, k1=args.k1, theta=fit.theta)
    root = find_ohs_root(params)
    ci_n, ci_cost = asymptotic_ci(fit, args.alpha)
    result = OHSResult(
        n_star=root.n_star,
        min_cost=root.min_cost,
        method="parametric",
        uncertainty=ci_n,
        cost_uncertainty=ci_cost,
        n_continuous=root.n_continuous,
    )
    report: Dict[str, Any] = {"fit": fit.to_json_dict(), "ohs": result.to_json_dict()}
    if args.bootstrap:
        report["bootstrap"] = bootstrap_ci(obs, fit, alpha=args.alpha, B=args.bootstrap, seed=ctx.seed).to_json_dict()
    ctx.json("fit.json", report)
    print(f"n_star={result.n_star} ci=[{ci_n.lower:.1f}, {ci_n.upper:.1f}]")
    return args.observations


def cmd_emulate(ctx: RunContext) -> Optional[str]:
    args = ctx.args
    config = parse_model(read_json(args.gp_config), GPConfig.from_json_dict, args.gp_config)
    if args.tau is not None:
        config = config.model_copy(update={"tau": args.tau})
    obs = read_observations_csv(args.observations, N=config.prior_N)
    oracle = _oracle(args)
    replay = ReplayOracle(list(zip(obs.values, obs.variances)), oracle)
    candidates = default_grid(config.prior_N, grid_size())
    result, trace, post = run_emulation_algorithm(
        replay,
        config,
        obs.sizes,
        max_iterations=args.max_iter if oracle is not None else 0,
        seed=ctx.seed,
        candidates=candidates,
        refit_prior=not args.fixed_prior,
    )
    ctx.json("ohs.json", result.to_json_dict())
    ctx.frame("trace.csv", trace)
    ctx.frame("mu_curve.csv", pd.DataFrame({"n": candidates, "mu": post.mu(candidates), "psi": post.psi(candidates)}))
    print(f"n_star={result.n_star} acquisitions={len(trace)}")
    return args.gp_config


def _simulate_dominance(ctx: RunContext, payload: Dict[str, Any]) -> None:
    config = parse_model({**payload, "seed": ctx.seed}, PopulationConfig.model_validate, ctx.args.config)
    trace, audit = simulate_dominance(config)
    means = post_update_means(trace, config)
    summary = {
        "post_update_mean_cost": {label: float(value) for label, value in means.items()},
        "holdout_spike_fraction": {
            label: holdout_spike_fraction(trace, label, config) for label in means.index if label.startswith("Holdout")
        },
    }
    ctx.frame("trace.csv", trace)
    ctx.frame("audit.csv", audit)
    ctx.json("summary.json", summary)


def _simulate_cost_structure(ctx: RunContext, payload: Dict[str, Any]) -> None:
    settings = dict(payload)
    holdout_grid = settings.pop("holdout_grid", None)
    replicates = int(settings.pop("replicates", 10))
    config = parse_model(settings, CostStructureConfig.model_validate, ctx.args.config)
    if holdout_grid is None:
        holdout_grid = np.unique(np.rint(np.geomspace(10, config.population_size - 1, 40)).astype(int)).tolist()
    frame = simulate_cost_structure(config, holdout_grid, replicates=replicates, seed=ctx.seed)
    ctx.frame("curve.csv", frame[["n", "k2_mean", "k2_sd", "replicates"]])
    ctx.frame("cost_curve.csv", frame[["n", "cost_mean", "cost_sd"]])
    ctx.json("summary.json", {"k1": frame.attrs["k1"], "flattening_point": flattening_point(frame)})


def _simulate_aspre(ctx: RunContext, payload: Dict[str, Any]) -> None:
    params = parse_model(payload.get("params", {}), AspreParams.model_validate, ctx.args.config)
    ctx.json("params.json", params.to_json_dict())
    for algo in payload.get("algos", ["parametric", "emulation"]):
        _, trace, summary = run_aspre_pipeline(
            cohort_seed=int(payload.get("cohort_seed", 0)),
            algo=algo,
            initial=int(payload.get("initial", 20)),
            sequential=int(payload.get("sequential", 100)),
            seed=ctx.seed,
            params=params,
            cohort_size=int(payload.get("cohort_size", 50_000)),
        )
        ctx.frame(f"{algo}_trace.csv", trace)
        ctx.json(f"{algo}_summary.json", summary)


SCENARIOS: Dict[str, Callable[[RunContext, Dict[str, Any]], None]] = {
    "dominance": _simulate_dominance,
    "cost-structure": _simulate_cost_structure,
    "aspre": _simulate_aspre,
}


def cmd_simulate(ctx: RunContext) -> Optional[str]:
    payload = read_json(ctx.args.config) if ctx.args.config else {}
    SCENARIOS[ctx.args.scenario](ctx, payload)
    return ctx.args.config


def cmd_assumptions(ctx: RunContext) -> Optional[str]:
    args = ctx.args
    if args.curve:
        samples = read_curve_table(args.curve)
        source = args.curve
    elif args.observations:
        samples = read_observations_csv(args.observations, N=args.N)
        source = args.observations
    else:
        raise DomainError("assumptions needs --observations or --curve")
    report = check_assumptions(samples, args.k1, args.N, k2_zero=args.k2_zero)
    ctx.json("assumptions.json", report.model_dump())
    print(f"theorem={report.theorem_applicable}")
    return source


COMMANDS: Dict[str, Callable[[RunContext], Optional[str]]] = {
    "ohs": cmd_ohs,
    "fit-parametric": cmd_fit_parametric,
    "emulate": cmd_emulate,
    "simulate": cmd_simulate,
    "assumptions": cmd_assumptions,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ohsize", description="Optimal holdout set sizing for deployed risk scores")
    parser.add_argument("--seed", type=int, default=0, help="Seed for every random stream")
    parser.add_argument("--out", default="ohsize-out", help="Output directory")
    parser.add_argument("--grid", type=int, default=None, help="Evaluation grid size")
    parser.add_argument("--log-level", default=None, help="Overrides OHSIZE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    ohs = sub.add_parser("ohs", help="OHS for known cost parameters")
    ohs.add_argument("config", help="CostParameters JSON (N,k1,a,b,c, optional bump)")
    ohs.add_argument("--curve", help="Tabulated n,k2 CSV replacing the power law")
    ohs.add_argument("--method", choices=["root", "grid"], default="root")

    fit = sub.add_parser("fit-parametric", help="Fit the power law to k2 observations")
    fit.add_argument("observations", help="n,value,variance CSV of k2 estimates")
    fit.add_argument("--k1", type=float, required=True)
    fit.add_argument("--N", type=int, required=True)
    fit.add_argument("--k1-se", type=float, default=0.0)
    fit.add_argument("--N-se", type=float, default=0.0)
    fit.add_argument("--alpha", type=float, default=0.1)
    fit.add_argument("--bootstrap", type=int, default=0, metavar="B")
    fit.add_argument("--next-points", type=int, default=0, metavar="K")
    fit.add_argument("--oracle-cmd", help="Command printing 'value,variance' for argument n")

    emulate = sub.add_parser("emulate", help="Emulate total cost and acquire by expected improvement")
    emulate.add_argument("observations", help="n,value,variance CSV of total-cost estimates")
    emulate.add_argument("gp_config", help="GPConfig JSON")
    emulate.add_argument("--tau", type=float, default=None)
    emulate.add_argument("--max-iter", type=int, default=100)
    emulate.add_argument("--oracle-cmd", help="Command printing 'value,variance' for argument n")
    emulate.add_argument("--fixed-prior", action="store_true", help="Keep the prior power law fixed")

    simulate = sub.add_parser("simulate", help="Run a simulation scenario")
    simulate.add_argument("config", nargs="?", default=None, help="Scenario JSON")
    simulate.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)

    assumptions = sub.add_parser("assumptions", help="Check the cost-model assumptions")
    assumptions.add_argument("--observations", help="n,value,variance CSV of k2 estimates")
    assumptions.add_argument("--curve", help="n,k2 CSV")
    assumptions.add_argument("--k1", type=float, required=True)
    assumptions.add_argument("--N", type=int, required=True)
    assumptions.add_argument("--k2-zero", type=float, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        set_log_level(args.log_level)
        set_grid_size(args.grid)
        configure_logging()
        ctx = RunContext(args, argv)
        config_path = COMMANDS[args.command](ctx)
        ctx.write_manifest(config_path)
    except (OHSError, ConfigError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error_kind={exc.kind}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception("%s failed unexpectedly", args.command)
        print("error_kind=internal", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return 3
    finally:
        set_grid_size(None)
        set_log_level(None)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
