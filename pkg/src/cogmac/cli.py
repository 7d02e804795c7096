"""Command line front end.

Every run writes ``report.json`` (the full result objects) and
``results.csv`` (one row per evaluated point) into ``--out``.

    cogmac --mode optimize --scenario table1_4x4 --out runs/t1
    cogmac --mode sweep --scenario table1_4x4 --sweep-var p_idle --sweep-values 0.1:1.0:0.1
    cogmac --mode simulate --scenario fig9_4x3 --seed 42 --cycles 20000
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assign import brute_force_assignment, greedy_assignment
from .config import ScenarioBundle, load_bundle
from .model import BudgetExceeded, ConfigError, SensingAssignment
from .optimize import OptimizerSettings, optimize_params
from .sensing import InfeasibleTarget
from .simulate import SimSettings, simulate, write_trace
from .throughput_exact import normalized_throughput_ne
from .throughput_reporting import normalized_throughput_re

MODES = ("analytic", "analytic-re", "optimize", "assign-greedy", "assign-brute", "simulate", "sweep")
SWEEP_VARS = ("p_idle", "dgamma", "pe", "pd_target")
CSV_HEADER = ["sweep_var", "nt", "p", "tau_max", "a_vec", "method", "seed"]

EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INFEASIBLE = 4


@dataclass
class RunManifest:
    mode: str
    scenario: str
    out: Path
    seed: int = 0
    cycles: int = 10_000
    pe: float | None = None
    pd_target: float | None = None
    dgamma: float = 0.0
    p_idle: float | None = None
    budget_scenarios: float = 1e7
    p_step: float = 0.01
    method: str = "factored"
    workers: int = 1
    sweep_var: str | None = None
    sweep_values: list = field(default_factory=list)
    sweep_mode: str | None = None
    trace: bool = False

    def to_dict(self) -> dict:
        out = {k: v for k, v in vars(self).items()}
        out["out"] = str(self.out)
        return out


@dataclass
class Row:
    sweep_value: object
    nt: float
    p: float | None
    tau_max: float | None
    a_vec: list | None
    method: str
    seed: int | None = None

    def cells(self) -> list[str]:
        fmt = lambda v: "" if v is None else repr(float(v))
        return ["" if self.sweep_value is None else repr(self.sweep_value), repr(float(self.nt)), fmt(self.p),
                fmt(self.tau_max), "" if self.a_vec is None else " ".join(str(int(a)) for a in self.a_vec),
                self.method, "" if self.seed is None else str(self.seed)]


def parse_values(text: str) -> list[float]:
    """``"0.1,0.2,0.5"`` or ``"start:stop:step"`` (stop included)."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range {text!r} must be start:stop:step with step > 0")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(max(count, 0))]
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cogmac", description=__doc__.split("\n\n")[0])
    ap.add_argument("--mode", required=True, choices=MODES)
    ap.add_argument("--scenario", required=True, help="scenario YAML file or bundled scenario name")
    ap.add_argument("--out", default="cogmac-out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cycles", type=int, default=10_000)
    ap.add_argument("--pe", type=float, help="uniform reporting error probability")
    ap.add_argument("--pd-target", type=float, help="target detection probability for every channel")
    ap.add_argument("--dgamma", type=float, default=0.0, help="shift applied to every SNR, in dB")
    ap.add_argument("--p-idle", type=float, help="idle probability for every channel")
    ap.add_argument("--budget-scenarios", type=float, default=1e7)
    ap.add_argument("--p-step", type=float, default=0.01, help="access probability grid step")
    ap.add_argument("--method", choices=("factored", "enumerate"), default="factored")
    ap.add_argument("--workers", type=int, default=1, help="simulator worker threads")
    ap.add_argument("--sweep-var", choices=SWEEP_VARS)
    ap.add_argument("--sweep-values", help="comma list or start:stop:step")
    ap.add_argument("--sweep-mode", choices=[m for m in MODES if m != "sweep"],
                    help="what to run at each sweep point (default: optimize when the scenario has an "
                         "assignment, otherwise assign-greedy)")
    ap.add_argument("--trace", action="store_true", help="write a per-cycle simulator trace")
    return ap


def manifest_from_args(args) -> RunManifest:
    values = []
    if args.mode == "sweep":
        if not args.sweep_var or not args.sweep_values:
            raise ConfigError([("--sweep-var/--sweep-values", "sweep mode needs both")])
        try:
            values = parse_values(args.sweep_values)
        except ValueError as exc:
            raise ConfigError([("--sweep-values", str(exc))]) from None
        if not values:
            raise ConfigError([("--sweep-values", "no values given")])
    if args.cycles < 1:
        raise ConfigError([("--cycles", "must be >= 1")])
    if args.workers < 1:
        raise ConfigError([("--workers", "must be >= 1")])
    return RunManifest(mode=args.mode, scenario=args.scenario, out=Path(args.out), seed=args.seed,
                       cycles=args.cycles, pe=args.pe, pd_target=args.pd_target, dgamma=args.dgamma,
                       p_idle=args.p_idle, budget_scenarios=args.budget_scenarios, p_step=args.p_step,
                       method=args.method, workers=args.workers, sweep_var=args.sweep_var,
                       sweep_values=values, sweep_mode=args.sweep_mode, trace=args.trace)


def _load(manifest: RunManifest, **override) -> ScenarioBundle:
    opts = dict(dgamma=manifest.dgamma, pd_target=manifest.pd_target, p_idle=manifest.p_idle, pe=manifest.pe)
    opts.update(override)
    return load_bundle(manifest.scenario, **opts)


def _need_assignment(bundle: ScenarioBundle, mode: str) -> SensingAssignment:
    if bundle.assignment is None:
        raise ConfigError([("assignment", f"mode {mode} needs an assignment block in the scenario")])
    return bundle.assignment


def _params_or_optimize(bundle, settings):
    """Parameters from the scenario, else optimized for its assignment, else
    a greedy assignment search.  Returns (assignment, params, search report)."""
    if bundle.assignment is None:
        res = greedy_assignment(bundle.scenario, settings, bundle.error_model)
        return res.assignment, res.params, res.to_dict()
    if bundle.params is not None:
        return bundle.assignment, bundle.params, None
    params, report = optimize_params(bundle.scenario, bundle.assignment, settings, bundle.error_model)
    return bundle.assignment, params, report.to_dict()


def _row(value, nt, params, method, seed=None) -> Row:
    return Row(value, nt, params.p, params.tau_max, list(params.a), method, seed)


def run_point(manifest: RunManifest, mode: str, bundle: ScenarioBundle, sweep_value=None):
    """Run one mode on one loaded scenario; returns (json-able dict, Row)."""
    settings = OptimizerSettings(p_grid_step=manifest.p_step)
    sc = bundle.scenario
    if mode in ("analytic", "analytic-re"):
        assignment = _need_assignment(bundle, mode)
        if bundle.params is None:
            raise ConfigError([("params", f"mode {mode} evaluates fixed parameters; add a params block "
                                          "or use --mode optimize")])
        if mode == "analytic":
            rep = normalized_throughput_ne(sc, bundle.params, assignment, method=manifest.method,
                                           budget_scenarios=manifest.budget_scenarios)
        else:
            from .model import ErrorModel
            errors = bundle.error_model or ErrorModel.none(sc.N)
            rep = normalized_throughput_re(sc, bundle.params, assignment, errors, method=manifest.method,
                                           budget_scenarios=manifest.budget_scenarios)
        return rep.to_dict(), _row(sweep_value, rep.nt, bundle.params, rep.method or mode)
    if mode == "optimize":
        assignment = _need_assignment(bundle, mode)
        params, rep = optimize_params(sc, assignment, settings, bundle.error_model)
        return rep.to_dict(), _row(sweep_value, rep.nt, params, "optimize")
    if mode in ("assign-greedy", "assign-brute"):
        search = greedy_assignment if mode == "assign-greedy" else brute_force_assignment
        res = search(sc, settings, bundle.error_model)
        return res.to_dict(), _row(sweep_value, res.nt, res.params, res.method)
    if mode == "simulate":
        assignment, params, search = _params_or_optimize(bundle, settings)
        sim = simulate(sc, params, assignment, bundle.error_model,
                       SimSettings(seed=manifest.seed, cycles=manifest.cycles,
                                   record_traces=manifest.trace, workers=manifest.workers))
        out = sim.to_dict()
        out["params"] = params.to_dict()
        out["assignment"] = assignment.to_dict()
        if search is not None:
            out["search"] = search
        analytic = (normalized_throughput_re(sc, params, assignment, bundle.error_model)
                    if bundle.error_model is not None and not bundle.error_model.is_zero
                    else normalized_throughput_ne(sc, params, assignment))
        diff = abs(analytic.nt - sim.nt_estimate)
        out["analytic_nt"] = analytic.nt
        out["agreement"] = {
            "abs_diff": diff,
            "within_3_stderr": bool(diff <= 3 * sim.stderr),
            "within_5_percent": bool(diff <= 0.05 * abs(analytic.nt)),
        }
        return out, _row(sweep_value, sim.nt_estimate, params, "simulate", manifest.seed), sim
    raise ConfigError([("mode", f"unknown mode {mode!r}")])


def run(manifest: RunManifest) -> dict:
    """Execute a manifest and write its artifacts; returns the report."""
    report: dict = {"manifest": manifest.to_dict()}
    rows: list[Row] = []
    sim_result = None
    if manifest.mode == "sweep":
        base = _load(manifest)
        inner = manifest.sweep_mode or ("optimize" if base.assignment is not None else "assign-greedy")
        points = []
        for value in manifest.sweep_values:
            bundle = _load(manifest, **{manifest.sweep_var: value})
            result = run_point(manifest, inner, bundle, sweep_value=value)
            points.append({"value": value, "result": result[0]})
            rows.append(result[1])
        report["sweep"] = {"var": manifest.sweep_var, "mode": inner, "points": points}
    else:
        result = run_point(manifest, manifest.mode, _load(manifest))
        report["result"] = result[0]
        rows.append(result[1])
        if len(result) > 2:
            sim_result = result[2]

    manifest.out.mkdir(parents=True, exist_ok=True)
    with open(manifest.out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(r.cells() for r in rows)
    with open(manifest.out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=_json_default)
        fh.write("\n")
    if sim_result is not None and manifest.trace:
        write_trace(sim_result, manifest.out / "trace.csv")
    return report


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = manifest_from_args(args)
        report = run(manifest)
    except ConfigError as exc:
        print(f"cogmac: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"cogmac: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"cogmac: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleTarget as exc:
        print(f"cogmac: infeasible detection target: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    summary = report.get("result", {}).get("nt")
    if summary is not None:
        print(f"nt = {summary:.6f}  ->  {manifest.out}")
    else:
        print(f"{len(report['sweep']['points'])} sweep points  ->  {manifest.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
