"""Which SU senses which channel: Hungarian seeding, greedy growth and
exhaustive search."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import (ConfigError, ErrorModel, ScenarioConfig, SensingAccessParams, SensingAssignment,
                    dual_view)
from . import _engine
from .optimize import OptimizerSettings, optimize_many
from .sensing import fuse_a_out_of_b, link_probabilities, sensing_time_for
from .throughput_exact import normalized_throughput_ne
from .throughput_reporting import normalized_throughput_re

BRUTE_FORCE_LIMIT = 16
GREEDY_DELTA = 1e-3
_PATTERN_BLOCK = 16384
PF_REFERENCE_RANGE = (1e-6, 0.5)


@dataclass
class AssignmentSearchResult:
    assignment: SensingAssignment
    params: SensingAccessParams
    nt: float
    iterations: list = field(default_factory=list)   # (step, (su, channel) or None, nt)
    method: str = ""
    evaluated: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "nt": self.nt,
            "assignment": self.assignment.to_dict(),
            "params": self.params.to_dict(),
            "iterations": [[step, None if pair is None else [pair[0] + 1, pair[1] + 1], nt]
                           for step, pair, nt in self.iterations],
            "evaluated": self.evaluated,
        }


def hungarian_min_cost(cost, M: int | None = None, N: int | None = None) -> np.ndarray:
    """Give every channel exactly one SU at minimum total cost.

    ``cost`` is N x M (SU x channel).  Each SU takes at most ceil(M / N)
    channels so that the load is spread; with N >= M this is the classic
    one-to-one assignment.  Returns the owning SU of every channel.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError("cost matrix must be a non-empty 2-D array")
    n_su, n_ch = cost.shape
    if (M is not None and M != n_ch) or (N is not None and N != n_su):
        raise ValueError(f"cost shape {cost.shape} does not match N={N}, M={M}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite")
    cap = math.ceil(n_ch / n_su)
    rows, cols = linear_sum_assignment(np.repeat(cost, cap, axis=0))
    owner = np.empty(n_ch, dtype=int)
    owner[cols] = rows // cap
    return owner


def _search_settings(scenario, settings, error_model) -> OptimizerSettings:
    """Searches evaluate thousands of masks, so under "auto" the thresholds are
    folded whenever folding provably gives the enumeration's answer."""
    if settings.a_strategy != "auto" or settings.fusion_rule != "free":
        return settings
    if error_model is not None and not error_model.is_zero:
        return settings
    if _engine.fold_is_exact(scenario, settings.p_grid()):
        return replace(settings, a_strategy="fold")
    return settings


def _final_nt(scenario, params, assignment, error_model) -> float:
    """Throughput of the chosen design through the public evaluators, so the
    reported value is exactly what a caller re-evaluating it gets."""
    if error_model is not None and not error_model.is_zero:
        return normalized_throughput_re(scenario, params, assignment, error_model).nt
    return normalized_throughput_ne(scenario, params, assignment).nt


def _masks_from_patterns(patterns, M: int, N: int) -> np.ndarray:
    bits = (np.asarray(patterns, dtype=np.int64)[:, None] >> np.arange(M * N)) & 1
    return bits.astype(bool).reshape(-1, N, M)


def round_robin_assignment(M: int, N: int, k: int) -> SensingAssignment:
    """SU i (0-based) senses channels i mod M, i mod M + 1, ... up to k of them,
    stopping at the last channel."""
    per_su = []
    for i in range(N):
        first = i % M
        per_su.append(range(first, min(first + k, M)))
    return dual_view(per_su, M, N)


def seed_costs(scenario: ScenarioConfig, params: SensingAccessParams, kind: str = "needed") -> np.ndarray:
    """Hungarian costs from the parameters optimized with every SU sensing
    every channel.

    ``"tau"`` uses the optimized sensing times as they are.  ``"needed"``
    (default) uses the time SU i would need on its own to detect channel j
    with the target probability while matching the false-alarm level the
    joint solution reached on that channel.  Joint solutions tend to park
    weak sensors at almost zero time, so raw times point at the worst pairs.
    """
    if kind == "tau":
        return np.asarray(params.tau, dtype=float).copy()
    if kind != "needed":
        raise ValueError(f"unknown seed cost {kind!r}")
    N, M = scenario.N, scenario.M
    full = np.ones((N, M), dtype=bool)
    _, pf = link_probabilities(scenario.snr, full, params.a, scenario.pd_target, params.tau, scenario.f_s)
    cost = np.empty((N, M))
    for j in range(M):
        pf_ref = float(np.clip(fuse_a_out_of_b(pf[:, j], int(params.a[j])), *PF_REFERENCE_RANGE))
        cost[:, j] = sensing_time_for(float(scenario.pd_target[j]), pf_ref, scenario.snr[:, j], scenario.f_s)
    return cost


def greedy_assignment(scenario: ScenarioConfig, settings: OptimizerSettings = OptimizerSettings(),
                      error_model: ErrorModel | None = None, delta_rel: float = GREEDY_DELTA,
                      init_p_step: float = 0.05, seed_cost: str = "needed") -> AssignmentSearchResult:
    """Seed with one SU per channel, then keep adding the single (SU, channel)
    pair that raises throughput most, while the gain beats ``delta_rel`` times
    the current throughput."""
    M, N = scenario.M, scenario.N
    settings = _search_settings(scenario, settings, error_model)
    full = np.ones((1, N, M), dtype=bool)
    init = optimize_many(scenario, full, replace(settings, p_grid_step=init_p_step), error_model)[0]
    owner = hungarian_min_cost(seed_costs(scenario, init.params, seed_cost))
    mask = np.zeros((N, M), dtype=bool)
    mask[owner, np.arange(M)] = True
    current = optimize_many(scenario, mask[None], settings, error_model)[0]
    iterations = [(0, None, current.nt)]
    evaluated = 2
    for step in range(1, M * N + 1):
        pairs = [(i, j) for i in range(N) for j in range(M) if not mask[i, j]]
        if not pairs:
            break
        cands = np.repeat(mask[None], len(pairs), axis=0)
        for k, (i, j) in enumerate(pairs):
            cands[k, i, j] = True
        results = optimize_many(scenario, cands, settings, error_model)
        evaluated += len(pairs)
        gains = np.array([r.nt for r in results]) - current.nt
        best = int(np.argmax(gains))  # first maximum = lowest (i, j)
        if not gains[best] > delta_rel * current.nt:
            break
        i, j = pairs[best]
        mask[i, j] = True
        current = results[best]
        iterations.append((step, (i, j), current.nt))
    assignment = SensingAssignment.from_matrix(mask)
    return AssignmentSearchResult(assignment, current.params,
                                  _final_nt(scenario, current.params, assignment, error_model),
                                  iterations, "greedy", evaluated)


def brute_force_assignment(scenario: ScenarioConfig, settings: OptimizerSettings = OptimizerSettings(),
                           error_model: ErrorModel | None = None,
                           limit: int = BRUTE_FORCE_LIMIT) -> AssignmentSearchResult:
    """Optimize every one of the 2^(MN) inclusion patterns and keep the best.

    Bit ``i*M + j`` of a pattern means SU i senses channel j.  Ties go to the
    lowest pattern.  The empty pattern earns nothing and is skipped.
    """
    M, N = scenario.M, scenario.N
    if M * N > limit:
        raise ConfigError([("assignment", f"brute force over {M}x{N} needs {2 ** (M * N)} candidates; "
                                          f"the limit is M*N <= {limit}")])
    settings = _search_settings(scenario, settings, error_model)
    total = 1 << (M * N)
    best_nt, best_pattern, best = 0.0, 0, None
    for start in range(1, total, _PATTERN_BLOCK):
        patterns = np.arange(start, min(start + _PATTERN_BLOCK, total))
        results = optimize_many(scenario, _masks_from_patterns(patterns, M, N), settings, error_model)
        nts = np.array([r.nt for r in results])
        k = int(np.argmax(nts))
        if best is None or nts[k] > best_nt:
            best_nt, best_pattern, best = float(nts[k]), int(patterns[k]), results[k]
    if best is None or best_nt <= 0.0:
        params = SensingAccessParams(np.zeros((N, M)), np.zeros(M, int), settings.p_grid()[0])
        return AssignmentSearchResult(SensingAssignment.from_matrix(np.zeros((N, M), bool)), params, 0.0,
                                      [], "brute-force", total)
    assignment = SensingAssignment.from_pattern(best_pattern, M, N)
    return AssignmentSearchResult(assignment, best.params,
                                  _final_nt(scenario, best.params, assignment, error_model),
                                  [(best_pattern, None, best.nt)], "brute-force", total)
