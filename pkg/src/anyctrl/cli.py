"""Command-line frontend.

Subcommands: ``validate``, ``pmf``, ``certify``, ``region``, ``simulate``.
Each takes a scenario source (a built-in name or a JSON config path).  All
floating-point output is printed with 12 significant digits.  Exit codes:
0 success, 1 validation failure, 2 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import build_aggregate, delta_pmf, tau_pmf
from .certify import NotApplicable, omega, region_boundary, theta, upsilon
from .errors import ComputationError, ValidationError, ParseError
from .loop import spot_check_plant
from .mc import empirical_cost, robustness_experiment, run_ensemble
from .scenarios import Scenario, load_scenario, parse_scenario, resolve_sweep_chain

THREADS_ENV_VAR = "ANYCTRL_THREADS"
REGION_MODELS = ("omega", "theta", "upsilon")


# --- output helpers ---------------------------------------------------------

def _fmt_float(x: float) -> str:
    return f"{x:.12g}"


def _json_ready(obj):
    """Round floats to 12 significant digits; map non-finite values to null."""
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt_float(x)) if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dumps(obj) -> str:
    import json

    return json.dumps(_json_ready(obj), indent=2) + "\n"


def _csv_text(header: list[str], rows: list[list], comments: list[str] | None = None) -> str:
    def cell(v) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return _fmt_float(float(v))
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    lines += comments or []
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        path = Path(out)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)


def _meta(scenario: Scenario, seed: int) -> dict:
    return {"seed": seed, "scenario_hash": scenario.scenario_hash(), "tool_version": __version__}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _load(args) -> Scenario:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        cfg = {**scenario.config, "sim": {**scenario.config["sim"], "seed": args.seed}}
        scenario = parse_scenario(cfg)
    return scenario


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from exc
    return 1


# --- subcommands ------------------------------------------------------------

def cmd_validate(args) -> int:
    checks: list[dict] = []
    try:
        scenario = _load(args)
    except (ParseError, ValidationError) as exc:
        report = {"valid": False, "checks": checks, "error": str(exc)}
        _emit(_render_validate(report, args.format), args.out)
        return 1

    checks.append({"check": "chain_stochastic", "status": "ok"})
    checks.append({"check": "chain_irreducible", "status": "ok"})
    checks.append({"check": "chain_aperiodic", "status": "ok"})
    if scenario.rates is not None:
        checks.append({"check": "rate_ranges", "status": "ok"})
    warnings: list[dict] = []
    if scenario.plant is not None:
        issues = spot_check_plant(scenario.plant)
        fatal = [i for i in issues if i["check"] == "equilibrium"]
        checks.append(
            {"check": "plant_equilibrium", "status": "ok" if not fatal else "fail", "detail": fatal or None}
        )
        warnings = [i for i in issues if i["check"] != "equilibrium"]
        if fatal:
            report = {"valid": False, "checks": checks, "warnings": warnings}
            _emit(_render_validate(report, args.format), args.out)
            return 1
    report = {"valid": True, "scenario": scenario.name, "checks": checks, "warnings": warnings}
    _emit(_render_validate(report, args.format), args.out)
    return 0


def _render_validate(report: dict, fmt: str) -> str:
    if fmt == "csv":
        rows = [[c["check"], c["status"]] for c in report.get("checks", [])]
        comments = []
        if report.get("error"):
            comments.append(f"# error,{report['error']}")
        comments.append(f"# valid,{report['valid']}")
        return _csv_text(["check", "status"], rows, comments)
    return _dumps(report)


def cmd_pmf(args) -> int:
    scenario = _load(args)
    if args.j_max < 2:
        raise ValidationError(f"--j-max must be >= 2, got {args.j_max}")
    if args.kind == "delta":
        pmf = delta_pmf(build_aggregate(scenario.chain), args.j_max)
    else:
        pmf = tau_pmf(scenario.chain, args.j_max)
    if args.format == "json":
        payload = {
            "meta": _meta(scenario, scenario.sim.seed),
            "kind": pmf.kind,
            "j": list(range(1, pmf.j_max + 1)),
            "probability": [float(m) for m in pmf.mass],
            "tail": pmf.tail,
        }
        _emit(_dumps(payload), args.out)
    else:
        _emit(pmf.to_csv(), args.out)
    if args.figures:
        from . import report as report_mod

        report_mod.render_pmf_figure(pmf, Path(args.figures) / f"pmf_{pmf.kind}_{_slug(scenario.name)}.png")
    return 0


def cmd_certify(args) -> int:
    scenario = _load(args)
    rates = scenario.certificate_rates()
    agg = build_aggregate(scenario.chain)
    certs: dict[str, dict] = {}
    for name, cert in (("omega", omega(agg, rates)), ("theta", theta(scenario.chain, rates))):
        certs[name] = {
            "value": cert.value,
            "stable": cert.stable,
            "bound_coefficient": cert.bound_coefficient,
            "truncation_error": cert.truncation_error,
        }
    try:
        ups = upsilon(scenario.chain, rates)
        certs["upsilon"] = {
            "value": ups.value,
            "stable": ups.stable,
            "bound_coefficient": ups.bound_coefficient,
            "truncation_error": ups.truncation_error,
        }
    except NotApplicable as exc:
        certs["upsilon"] = {"status": "not_applicable", "reason": str(exc)}
    payload = {
        "meta": _meta(scenario, scenario.sim.seed),
        "scenario": scenario.name,
        "rates": {"rho": rates.rho, "alpha": rates.alpha},
        "certificates": certs,
    }
    if args.format == "csv":
        rows = []
        for name, cert in certs.items():
            if "status" in cert:
                rows.append([name, "", "", "", "", cert["status"]])
            else:
                rows.append(
                    [name, cert["value"], cert["stable"], cert["bound_coefficient"], cert["truncation_error"], "ok"]
                )
        _emit(
            _csv_text(["certificate", "value", "stable", "bound_coefficient", "truncation_error", "status"], rows),
            args.out,
        )
    else:
        _emit(_dumps(payload), args.out)
    return 0


def cmd_region(args) -> int:
    scenario = _load(args)
    models = REGION_MODELS if args.model == "all" else (args.model,)
    if args.points < 1:
        raise ValidationError(f"--points must be >= 1, got {args.points}")
    grid = np.linspace(args.rho_min, args.rho_max, args.points)
    curves = {model: region_boundary(model, scenario.chain, grid) for model in models}
    if args.format == "json":
        payload = {
            "meta": _meta(scenario, scenario.sim.seed),
            "scenario": scenario.name,
            "curves": {
                model: [{"rho": p.rho, "alpha_star": p.alpha_star, "capped": p.capped} for p in pts]
                for model, pts in curves.items()
            },
        }
        _emit(_dumps(payload), args.out)
    else:
        rows = [[p.rho, p.alpha_star, model] for model, pts in curves.items() for p in pts]
        _emit(_csv_text(["rho", "alpha_star", "model"], rows), args.out)
    if args.figures:
        from . import report as report_mod

        report_mod.render_region_figure(curves, Path(args.figures) / f"region_{_slug(scenario.name)}.png")
    return 0


def _simulate_record(
    scenario: Scenario, chain, controller: str, capacity: int, threads: int, collect_traces: bool = False
) -> tuple[dict, object]:
    if scenario.plant is None:
        raise ValidationError("simulate requires a plant in the scenario")
    from dataclasses import replace

    cfg = replace(scenario.sim, controller=controller)
    result = run_ensemble(scenario.plant, chain, cfg, threads=threads, collect_traces=collect_traces)
    record = {
        "scenario": scenario.name,
        "capacity": capacity,
        "controller": controller,
        "trajectories": result.n_trajectories,
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "diverged": result.n_diverged,
    }
    if result.costs is not None:
        summary = empirical_cost(result)
        record["j_mean"] = summary.mean
        record["j_stderr"] = summary.stderr
    else:
        record["j_mean"] = None
        record["j_stderr"] = None
    return record, result


def cmd_simulate(args) -> int:
    scenario = _load(args)
    threads = _threads(args)
    records: list[dict] = []
    trace_result = None
    if scenario.sweep is not None:
        if args.trace_out:
            raise ValidationError("--trace-out is not supported with sweep scenarios")
        for capacity in scenario.sweep.capacities:
            chain = resolve_sweep_chain(scenario, capacity)
            for controller in scenario.sweep.controllers:
                record, _ = _simulate_record(scenario, chain, controller, capacity, threads)
                records.append(record)
    else:
        record, result = _simulate_record(
            scenario,
            scenario.chain,
            scenario.sim.controller,
            scenario.chain.capacity,
            threads,
            collect_traces=bool(args.trace_out),
        )
        records.append(record)
        trace_result = result

    payload = {"meta": _meta(scenario, scenario.sim.seed), "results": records}

    if args.theorem3:
        if scenario.plant is None:
            raise ValidationError("--theorem3 requires a plant in the scenario")
        checkpoints = scenario.sim.checkpoints or _default_checkpoints(scenario.sim.horizon)
        report = robustness_experiment(scenario.plant, scenario.chain, scenario.sim, checkpoints, threads=threads)
        payload["theorem3"] = {
            "omega": report.omega_value,
            "w_mean": report.w_mean,
            "trajectories": report.n_trajectories,
            "checkpoints": {
                str(k): {"mean": report.checkpoint_means[k], "stderr": report.checkpoint_stderrs[k]}
                for k in sorted(report.checkpoint_means)
            },
        }

    if args.trace_out and trace_result is not None:
        _write_trace_rows(trace_result.traces, args.trace_out)

    if args.format == "csv":
        header = ["scenario", "capacity", "controller", "trajectories", "seed", "horizon", "diverged", "j_mean", "j_stderr"]
        rows = [[r[h] if r[h] is not None else "" for h in header] for r in records]
        _emit(_csv_text(header, rows), args.out)
    else:
        _emit(_dumps(payload), args.out)

    if args.figures and scenario.sweep is not None:
        from . import report as report_mod

        report_mod.render_sweep_figure(records, Path(args.figures) / f"cost_sweep_{_slug(scenario.name)}.png")
    return 0


def _default_checkpoints(horizon: int) -> tuple[int, ...]:
    quarters = sorted({max(horizon // 4, 1) * i for i in (1, 2, 3)} | {horizon - 1})
    return tuple(k for k in quarters if 0 <= k < horizon)


def _write_trace_rows(traces, path: str) -> None:
    rows = []
    for idx, trace in enumerate(traces):
        for k in range(len(trace.k)):
            rows.append(
                [idx, int(trace.k[k]), int(trace.availability[k]), int(trace.effective_len[k]),
                 float(np.asarray(trace.inputs[k]).reshape(-1)[0]) if np.asarray(trace.inputs[k]).size == 1 else str(list(np.asarray(trace.inputs[k]).reshape(-1))),
                 float(np.asarray(trace.states[k]).reshape(-1)[0]) if np.asarray(trace.states[k]).size == 1 else str(list(np.asarray(trace.states[k]).reshape(-1))),
                 float(trace.v[k])]
            )
    _emit(_csv_text(["trajectory", "k", "N", "lambda", "u", "x", "V"], rows), path)


# --- parser -----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anyctrl",
        description="Buffered anytime control: simulation and stochastic-stability certificates.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="built-in scenario name or path to a JSON config")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="write output to this path instead of stdout")
    common.add_argument("--threads", type=int, default=None, help=f"worker processes (default: ${THREADS_ENV_VAR} or 1)")
    common.add_argument("--theorem3", action="store_true", help="run the noise-boundedness experiment (simulate)")
    common.add_argument("--figures", default=None, metavar="DIR", help="also render figures into DIR")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="validate a scenario configuration")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("pmf", parents=[common], help="first-return-time distribution")
    p.add_argument("--kind", choices=("delta", "tau"), default="delta",
                   help="delta: buffer depletion; tau: zero availability")
    p.add_argument("--j-max", type=int, default=50, help="truncation point (>= 2)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("certify", parents=[common], help="evaluate stability certificates")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("region", parents=[common], help="stability-region boundary curves")
    p.add_argument("--model", choices=REGION_MODELS + ("all",), default="all")
    p.add_argument("--rho-min", type=float, default=0.0)
    p.add_argument("--rho-max", type=float, default=0.99)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop Monte Carlo simulation")
    p.add_argument("--trace-out", default=None, metavar="PATH", help="also write per-step trace CSV")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except ComputationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
