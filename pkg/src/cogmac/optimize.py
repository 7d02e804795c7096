"""Joint choice of sensing times, fusion thresholds and access probability
for a fixed sensing assignment.

The search is coordinate descent over the per-(SU, channel) sensing times
with golden-section line searches, run on the continuous relaxation of the
packet count.  The access probability is folded into the objective as a
maximum over a grid, and the fusion thresholds are either enumerated or, when
that is provably equivalent, folded as well (see ``a_strategy``).  Reported
throughput always uses the whole-packet count.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .model import (BudgetExceeded, ConfigError, ErrorModel, ScenarioConfig, SensingAccessParams,
                    SensingAssignment, ThroughputReport)
from .sensing import (InfeasibleTarget, false_alarm_probability, fuse_a_out_of_b, fused_with_errors, per_su_target,
                      per_su_target_with_errors)
from .throughput_exact import normalized_throughput_ne
from .throughput_reporting import normalized_throughput_re

A_ENUM_AUTO_LIMIT = 64
A_ENUM_GUARD = 10_000
FUSION_RULES = ("free", "or", "and", "majority")


@dataclass(frozen=True)
class OptimizerSettings:
    p_grid_step: float = 0.01
    p_min: float = 1e-4
    p_max: float = 0.5
    tau_tolerance: float = 1e-6
    inner_convergence_rel: float = 1e-6
    max_rounds: int = 50
    relax_floor: bool = True
    a_strategy: str = "auto"     # "auto", "enumerate" or "fold"
    fusion_rule: str = "free"    # "free", or one fixed rule: "or", "and", "majority"
    scale_move: bool = True
    refine_p: bool = True
    chunk: int = 4096

    def __post_init__(self):
        problems = []
        if not 0.0 < self.p_grid_step <= 0.5:
            problems.append(("p_grid_step", f"must lie in (0, 0.5], got {self.p_grid_step}"))
        if not 0.0 < self.p_min <= self.p_max < 1.0:
            problems.append(("p_min/p_max", "need 0 < p_min <= p_max < 1"))
        if not self.tau_tolerance > 0:
            problems.append(("tau_tolerance", "must be > 0"))
        if not self.inner_convergence_rel >= 0:
            problems.append(("inner_convergence_rel", "must be >= 0"))
        if self.max_rounds < 1:
            problems.append(("max_rounds", "must be >= 1"))
        if self.a_strategy not in ("auto", "enumerate", "fold"):
            problems.append(("a_strategy", f"unknown strategy {self.a_strategy!r}"))
        if self.fusion_rule not in FUSION_RULES:
            problems.append(("fusion_rule", f"unknown rule {self.fusion_rule!r}"))
        if problems:
            raise ConfigError(problems)

    def p_grid(self) -> np.ndarray:
        steps = np.arange(self.p_grid_step, self.p_max + 1e-12, self.p_grid_step)
        return np.unique(np.round(np.concatenate([[self.p_min], steps]), 12))


@dataclass(frozen=True)
class DetectionEqualization:
    """Per-link detection targets and the false-alarm curves they imply."""

    pd: np.ndarray          # (N, M), zero where unassigned
    fused_pd: np.ndarray    # (M,), worst receiver when reporting errors are modeled
    snr: np.ndarray
    f_s: float

    def pf(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(self.pd)
        on = self.pd > 0
        out[on] = false_alarm_probability(self.pd[on], tau[on], self.snr[on], self.f_s)
        return out


def equalize_detection(scenario: ScenarioConfig, assignment: SensingAssignment, a_vec,
                       error_model: ErrorModel | None = None) -> DetectionEqualization:
    """Give every sensor of a channel the same detection probability so that
    the fused detection probability meets the channel's target exactly."""
    N, M = scenario.N, scenario.M
    pd = np.zeros((N, M))
    fused = np.ones(M)
    use_errors = error_model is not None and not error_model.is_zero
    for j, sensors in enumerate(assignment.per_channel):
        if not sensors:
            continue
        idx = sorted(sensors)
        a = int(a_vec[j])
        if use_errors:
            x = per_su_target_with_errors(float(scenario.pd_target[j]), a, idx, error_model)
            fused[j] = min(fused_with_errors(r, [x] * len(idx), idx, error_model, a) for r in range(N))
        else:
            x = per_su_target(float(scenario.pd_target[j]), a, len(idx))
            fused[j] = fuse_a_out_of_b([x] * len(idx), a)
        pd[idx, j] = x
    return DetectionEqualization(pd=pd, fused_pd=fused, snr=scenario.snr, f_s=scenario.f_s)


def line_search_tau(objective, lo: float, hi: float, tol: float = 1e-6) -> tuple[float, float]:
    """Golden-section maximization of a scalar objective on [lo, hi].

    Returns (argmax, value).  The result is never worse than either endpoint;
    a constant objective yields the midpoint.
    """
    if not hi >= lo:
        raise ValueError(f"degenerate bracket [{lo}, {hi}]")

    def fn(x):
        return np.array([objective(float(v)) for v in np.atleast_1d(x)])

    x, v = _engine.golden_max(fn, np.array([lo]), np.array([hi]), _engine.golden_iterations(hi - lo, tol))
    return float(x[0]), float(v[0])


@dataclass
class Optimized:
    params: SensingAccessParams
    nt: float
    relaxed: float
    trace: list = field(default_factory=list)


def rule_thresholds(rule: str, b) -> tuple:
    """Threshold per channel for a fixed rule; 0 where nobody senses."""
    pick = {"or": lambda bj: 1, "and": lambda bj: bj, "majority": lambda bj: (bj + 1) // 2}[rule]
    return tuple(int(pick(bj)) if bj > 0 else 0 for bj in b)


def _a_vectors(b):
    return list(itertools.product(*[range(1, bj + 1) if bj > 0 else (0,) for bj in b]))


def _feasible_a_vectors(scenario, mask, errors):
    """Threshold vectors whose detection target every receiver can reach
    despite reporting errors (a strict rule may not be reachable at all)."""
    options = []
    for j in range(scenario.M):
        sensors = np.flatnonzero(mask[:, j])
        if sensors.size == 0:
            options.append((0,))
            continue
        ok = []
        for a in range(1, sensors.size + 1):
            try:
                per_su_target_with_errors(float(scenario.pd_target[j]), a, sensors, errors)
            except InfeasibleTarget:
                continue
            ok.append(a)
        options.append(tuple(ok))
    return list(itertools.product(*options))


def _plan(scenario, masks, settings, errors):
    """Lane layout: (mask index, fixed thresholds or None) per lane."""
    plan = []
    fold_ok = None
    for k, mask in enumerate(masks):
        b = mask.sum(axis=0)
        count = int(np.prod(np.maximum(b, 1)))
        strategy = settings.a_strategy
        if settings.fusion_rule != "free":
            a = rule_thresholds(settings.fusion_rule, b)
            if errors is not None and a not in _feasible_a_vectors(scenario, mask, errors):
                raise InfeasibleTarget(f"the {settings.fusion_rule} rule cannot reach the detection target")
            plan.append((k, a))
            continue
        if errors is not None:
            strategy = "enumerate"
        elif strategy == "auto" and count > A_ENUM_AUTO_LIMIT:
            if fold_ok is None:
                fold_ok = _engine.fold_is_exact(scenario, settings.p_grid())
            strategy = "fold" if fold_ok else "enumerate"
        elif strategy == "auto":
            strategy = "enumerate"
        if strategy == "enumerate":
            if count > A_ENUM_GUARD:
                raise BudgetExceeded(f"{count} threshold vectors exceed the guard of {A_ENUM_GUARD}")
            vectors = _a_vectors(b) if errors is None else _feasible_a_vectors(scenario, mask, errors)
            if not vectors:
                raise InfeasibleTarget("no fusion rule reaches the detection target on every channel")
            plan.extend((k, a) for a in vectors)
        else:
            plan.append((k, None))
    return plan


def optimize_many(scenario: ScenarioConfig, masks, settings: OptimizerSettings = OptimizerSettings(),
                  error_model: ErrorModel | None = None, p_fixed: float | None = None,
                  record: bool = False) -> list[Optimized]:
    """Optimize every assignment mask in ``masks`` (K x N x M); one result per mask."""
    masks = np.asarray(masks, dtype=bool)
    K = masks.shape[0]
    errors = error_model if (error_model is not None and not error_model.is_zero) else None
    plan = _plan(scenario, masks, settings, errors)
    grid = settings.p_grid()
    results: list[Optimized | None] = [None] * K
    best_key: list = [None] * K
    folded = [i for i, (_, a) in enumerate(plan) if a is None]
    fixed = [i for i, (_, a) in enumerate(plan) if a is not None]
    for group in (folded, fixed):
        for start in range(0, len(group), settings.chunk):
            ids = group[start:start + settings.chunk]
            lane_masks = masks[[plan[i][0] for i in ids]]
            a_fixed = None if plan[ids[0]][1] is None else np.array([plan[i][1] for i in ids])
            problem = _engine.LaneProblem(
                scenario, lane_masks, a_fixed=a_fixed, p_grid=None if p_fixed is not None else grid,
                p_fixed=None if p_fixed is None else np.full(len(ids), p_fixed), error_model=errors,
                relax_floor=settings.relax_floor)
            res = _engine.optimize_lanes(problem, tau_tol=settings.tau_tolerance,
                                         rel_tol=settings.inner_convergence_rel,
                                         max_rounds=settings.max_rounds, scale_move=settings.scale_move,
                                         refine_p=settings.refine_p and p_fixed is None, record=record)
            for pos, lane in enumerate(ids):
                k = plan[lane][0]
                tau = np.where(lane_masks[pos], res.tau[pos], 0.0)
                # higher exact NT first, then smaller sensing phase, smaller p, plan order
                key = (-res.nt_exact[pos], tau.sum(axis=1).max(), res.p[pos], lane)
                if best_key[k] is None or key < best_key[k]:
                    best_key[k] = key
                    results[k] = Optimized(
                        params=SensingAccessParams(tau, res.a[pos], res.p[pos]),
                        nt=float(res.nt_exact[pos]), relaxed=float(res.value[pos]),
                        trace=res.traces[pos] if record else [])
    return results


def optimize_params(scenario: ScenarioConfig, assignment: SensingAssignment,
                    settings: OptimizerSettings = OptimizerSettings(),
                    error_model: ErrorModel | None = None) -> tuple[SensingAccessParams, ThroughputReport]:
    """Best (tau, a, p) for one assignment, with the exact-floor report."""
    if not any(assignment.per_su):
        params = SensingAccessParams(np.zeros((scenario.N, scenario.M)), np.zeros(scenario.M, int),
                                     settings.p_grid()[0])
        report = normalized_throughput_ne(scenario, params, assignment)
        report.method = "optimize"
        return params, report
    best = optimize_many(scenario, assignment.matrix[None], settings, error_model, record=True)[0]
    if error_model is not None and not error_model.is_zero:
        report = normalized_throughput_re(scenario, best.params, assignment, error_model)
    else:
        report = normalized_throughput_ne(scenario, best.params, assignment)
    report.trace = best.trace
    report.method = "optimize"
    return best.params, report
