"""Normalized throughput without reporting errors.

Every SU ends up with the same fused view of the spectrum.  A channel can be
perceived available because it is idle and no false alarm was raised, or
because it is busy and the PU was missed; only the first kind earns
throughput.  Each SU picks one perceived-available channel uniformly.

Two evaluators are provided.  ``method="enumerate"`` walks the availability /
sensing-outcome sets and every access vector literally.  ``method="factored"``
(the default) uses the fact that, seen from one channel, the other channels
only matter through how many of them are perceived available, and that the
number of SUs landing on a channel is binomial given that count.  Both give
the same number up to round-off.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .contention import conditional_channel_throughput, frame_durations, relaxed_channel_throughput
from .model import (BudgetExceeded, ScenarioConfig, SensingAccessParams, SensingAssignment,
                    ThroughputReport)
from .sensing import count_distribution, fuse_a_out_of_b, link_probabilities

DEFAULT_SCENARIO_BUDGET = 10_000_000
DEFAULT_COMPOSITION_BUDGET = 1_000_000


@dataclass(frozen=True)
class OutcomeScenario:
    """Truly available channels, the available ones sensed correctly and the
    busy ones that were missed, with the probability of this outcome."""

    available: frozenset
    detected_available: frozenset
    misdetected: frozenset
    weight: float


def fused_channel_probabilities(scenario: ScenarioConfig, params: SensingAccessParams,
                                assignment: SensingAssignment):
    """Fused detection and false-alarm probability of every channel.

    Channels nobody senses are treated as always sensed busy.
    """
    mask = assignment.matrix
    pd_link, pf_link = link_probabilities(scenario.snr, mask, params.a, scenario.pd_target,
                                          params.tau, scenario.f_s)
    M = scenario.M
    pd = np.ones(M)
    pf = np.ones(M)
    for j, sensors in enumerate(assignment.per_channel):
        if sensors:
            idx = sorted(sensors)
            pd[j] = fuse_a_out_of_b(pd_link[idx, j], int(params.a[j]))
            pf[j] = fuse_a_out_of_b(pf_link[idx, j], int(params.a[j]))
    return pd, pf


def channel_throughput_table(scenario: ScenarioConfig, params: SensingAccessParams,
                             floor: bool = True) -> np.ndarray:
    """Conditional throughput of a channel with n = 0..N contenders (entry 0 is 0)."""
    frames = frame_durations(scenario.timing)
    fn = conditional_channel_throughput if floor else relaxed_channel_throughput
    out = np.zeros(scenario.N + 1)
    n = np.arange(1, scenario.N + 1)
    out[1:] = fn(n, params.p, scenario.timing, frames, params.tau_max, scenario.reporting_time)
    return out


def access_vector_probability(n_vec, k_e: int, N: int) -> float:
    """Probability that N SUs choosing uniformly among k_e channels produce ``n_vec``."""
    n_vec = [int(n) for n in n_vec]
    if sum(n_vec) != N:
        raise ValueError(f"access vector {n_vec} does not sum to N={N}")
    if len(n_vec) != k_e or k_e < 1:
        raise ValueError("access vector length must equal k_e >= 1")
    coeff = math.factorial(N)
    for n in n_vec:
        coeff //= math.factorial(n)
    return coeff * (1.0 / k_e) ** N


def compositions(N: int, k: int) -> Iterator[tuple[int, ...]]:
    """All k-tuples of non-negative integers summing to N, lexicographic."""
    if k == 1:
        yield (N,)
        return
    for first in range(N, -1, -1):
        for rest in compositions(N - first, k - 1):
            yield (first,) + rest


def composition_count(N: int, k: int) -> int:
    return math.comb(N + k - 1, k - 1)


def _conditional_ne(theta, omega, table: np.ndarray, M: int, N: int,
                    composition_budget: int = DEFAULT_COMPOSITION_BUDGET) -> float:
    perceived = sorted(set(theta) | set(omega))
    k_e = len(perceived)
    if k_e == 0 or not theta:
        return 0.0
    count = composition_count(N, k_e)
    if count > composition_budget:
        raise BudgetExceeded(f"{count} access vectors exceed the budget of {composition_budget}; "
                             "use the factored evaluator or the simulator")
    earning = [pos for pos, j in enumerate(perceived) if j in theta]
    total = 0.0
    for n_vec in compositions(N, k_e):
        gain = sum(table[n_vec[pos]] for pos in earning)
        if gain:
            total += access_vector_probability(n_vec, k_e, N) * gain
    return total / M


def conditional_throughput_ne(theta, omega, params: SensingAccessParams, scenario: ScenarioConfig,
                              floor: bool = True) -> float:
    """Expected throughput for one sensing realization, averaged over access vectors.

    ``theta`` are the idle channels sensed idle, ``omega`` the missed busy ones.
    """
    table = channel_throughput_table(scenario, params, floor)
    return _conditional_ne(theta, omega, table, scenario.M, scenario.N)


def enumerate_outcomes(p_idle, pd, pf) -> Iterator[OutcomeScenario]:
    """Every (available, detected-available, misdetected) triple with its weight."""
    M = len(p_idle)
    channels = range(M)
    for psi_bits in itertools.product((0, 1), repeat=M):
        psi = frozenset(j for j in channels if psi_bits[j])
        busy = [j for j in channels if not psi_bits[j]]
        w_psi = math.prod(p_idle[j] if j in psi else 1.0 - p_idle[j] for j in channels)
        for theta_bits in itertools.product((0, 1), repeat=len(psi)):
            theta = frozenset(j for j, bit in zip(sorted(psi), theta_bits) if bit)
            w_theta = math.prod(1.0 - pf[j] if j in theta else pf[j] for j in psi)
            for omega_bits in itertools.product((0, 1), repeat=len(busy)):
                omega = frozenset(j for j, bit in zip(busy, omega_bits) if bit)
                w_omega = math.prod(1.0 - pd[j] if j in omega else pd[j] for j in busy)
                yield OutcomeScenario(psi, theta, omega, w_psi * w_theta * w_omega)


@lru_cache(maxsize=256)
def binomial_occupancy(N: int, M: int) -> np.ndarray:
    """B[k, n] = P(n of N SUs pick a given channel | k+1 perceived channels), k = 0..M-1."""
    n = np.arange(N + 1)
    out = np.empty((M, N + 1))
    log_comb = np.array([math.lgamma(N + 1) - math.lgamma(m + 1) - math.lgamma(N - m + 1) for m in n])
    for k in range(M):
        q = 1.0 / (k + 1)
        if q == 1.0:
            out[k] = 0.0
            out[k, N] = 1.0
        else:
            out[k] = np.exp(log_comb + n * math.log(q) + (N - n) * math.log1p(-q))
    out.setflags(write=False)
    return out


def leave_one_out_counts(r) -> np.ndarray:
    """pmf of the number of other entries set, for each entry of ``r``.

    ``r`` has shape (..., M); the result is (..., M, M) where [..., j, k] is
    P(exactly k of the entries other than j are set).
    """
    r = np.asarray(r, dtype=float)
    M = r.shape[-1]
    others = np.broadcast_to(r[..., None, :], r.shape[:-1] + (M, M)).copy()
    idx = np.arange(M)
    others[..., idx, idx] = 0.0
    return count_distribution(others)[..., :M]


def per_channel_occupancy(q_avail, q_missed, N: int) -> np.ndarray:
    """O[..., j, n] = P(channel j is idle, sensed idle, and chosen by exactly n SUs)."""
    q_avail = np.asarray(q_avail, dtype=float)
    M = q_avail.shape[-1]
    others = leave_one_out_counts(q_avail + np.asarray(q_missed, dtype=float))
    return q_avail[..., None] * (others @ binomial_occupancy(N, M))


def normalized_throughput_ne(scenario: ScenarioConfig, params: SensingAccessParams,
                             assignment: SensingAssignment, method: str = "factored",
                             floor: bool = True, budget_scenarios: int = DEFAULT_SCENARIO_BUDGET,
                             budget_compositions: int = DEFAULT_COMPOSITION_BUDGET) -> ThroughputReport:
    params.check(assignment, scenario.timing.T)
    pd, pf = fused_channel_probabilities(scenario, params, assignment)
    table = channel_throughput_table(scenario, params, floor)
    M, N = scenario.M, scenario.N
    p0 = scenario.p_idle
    if method == "factored":
        occ = per_channel_occupancy(p0 * (1.0 - pf), (1.0 - p0) * (1.0 - pd), N)
        per_channel = occ @ table
    elif method == "enumerate":
        n_outcomes = 4 ** M
        if n_outcomes > budget_scenarios:
            raise BudgetExceeded(f"{n_outcomes} sensing outcomes exceed the budget of {budget_scenarios}; "
                                 "use the factored evaluator or the simulator")
        per_channel = np.zeros(M)
        for outcome in enumerate_outcomes(p0, pd, pf):
            if outcome.weight == 0.0 or not outcome.detected_available:
                continue
            for j in outcome.detected_available:
                per_channel[j] += M * outcome.weight * _conditional_ne(
                    {j}, outcome.detected_available | outcome.misdetected, table, M, N, budget_compositions)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ThroughputReport(nt=float(per_channel.mean()), per_channel_nt=per_channel,
                            params_used=params, assignment_used=assignment,
                            method=f"ne-{method}")
