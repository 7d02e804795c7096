"""Normalized throughput when the one-bit sensing reports can flip in transit.

Every SU receives every report over its own link, so different SUs may fuse
different views of the spectrum.  Given the channel states and the sent
report bits, the flips on different links are independent, which means each
receiver's decision on a channel is an independent Bernoulli draw.

``method="factored"`` enumerates, per channel, the (state, sent bits)
patterns, combines channels, and then treats the receivers analytically.
``method="enumerate"`` walks the full joint space of states, sent bits and
flip bits and averages over every joint channel choice; it is only practical
for tiny instances and serves as the reference.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (BudgetExceeded, ErrorModel, ScenarioConfig, SensingAccessParams,
                    SensingAssignment, ThroughputReport)
from .sensing import count_distribution, link_probabilities, upper_tail
from .throughput_exact import channel_throughput_table, leave_one_out_counts

DEFAULT_PATTERN_BUDGET = 2_000_000
DEFAULT_JOINT_BUDGET = 1 << 20
_CHUNK = 4096


@dataclass(frozen=True)
class ReceiverView:
    """Channels one SU believes are available, split by their true state."""

    su: int
    truly_available: frozenset
    erroneous: frozenset

    @property
    def perceived_available(self) -> frozenset:
        return self.truly_available | self.erroneous

    @property
    def k_e(self) -> int:
        return len(self.truly_available) + len(self.erroneous)


def receiver_views(true_states, sensing_outcomes, error_patterns, assignment: SensingAssignment,
                   a_vec) -> list[ReceiverView]:
    """Fused view of every SU for one realization.

    ``true_states[j]`` is 1 when channel j is idle.  ``sensing_outcomes[s, j]``
    is the bit sensor s sends about channel j (1 = busy).  ``error_patterns[r, s, j]``
    is 1 when that bit flips on its way to receiver r; the diagonal r = s is
    ignored since an SU keeps its own result.
    """
    states = np.asarray(true_states, dtype=bool)
    outcomes = np.asarray(sensing_outcomes, dtype=bool)
    flips = np.asarray(error_patterns, dtype=bool)
    N, M = assignment.N, assignment.M
    if states.shape != (M,) or outcomes.shape != (N, M) or flips.shape != (N, N, M):
        raise ValueError(f"expected shapes ({M},), ({N}, {M}), ({N}, {N}, {M})")
    flips = flips.copy()
    flips[np.arange(N), np.arange(N), :] = False
    mask = assignment.matrix
    views = []
    for r in range(N):
        received = (outcomes ^ flips[r]) & mask
        busy_votes = received.sum(axis=0)
        perceived = [j for j in range(M) if mask[:, j].any() and busy_votes[j] < a_vec[j]]
        views.append(ReceiverView(r, frozenset(j for j in perceived if states[j]),
                                  frozenset(j for j in perceived if not states[j])))
    return views


def conditional_throughput_re(views: Sequence[ReceiverView], table, M: int) -> float:
    """Expected throughput over every joint channel choice of the SUs.

    Each SU picks uniformly from its own view; SUs with an empty view stay
    out.  ``table[n]`` is the channel throughput with n contenders.
    """
    active = [v for v in views if v.k_e > 0]
    if not active:
        return 0.0
    options = [sorted(v.perceived_available) for v in active]
    prob = 1.0
    for opts in options:
        prob /= len(opts)
    earning = set().union(*(v.truly_available for v in active))
    total = 0.0
    for choice in itertools.product(*options):
        counts: dict[int, int] = {}
        for j in choice:
            counts[j] = counts.get(j, 0) + 1
        assert sum(counts.values()) <= len(views)
        total += sum(table[n] for j, n in counts.items() if j in earning)
    return prob * total / M


def link_probabilities_re(scenario: ScenarioConfig, params: SensingAccessParams,
                          assignment: SensingAssignment, error_model: ErrorModel | None):
    return link_probabilities(scenario.snr, assignment.matrix, params.a, scenario.pd_target,
                              params.tau, scenario.f_s, error_model)


def pattern_probability(states, outcomes, flips, p_idle, pd_link, pf_link, mask, pe) -> np.ndarray:
    """Probability of joint (state, sent bits, flip bits) patterns.

    Arrays carry a leading batch axis: states (K, M) with 1 = idle, outcomes
    (K, N, M), flips (K, N, N, M) indexed [receiver, sender, channel].  Bits
    on unassigned pairs or on the diagonal must be 0; otherwise the pattern
    has probability 0.
    """
    states = np.asarray(states, dtype=bool)
    outcomes = np.asarray(outcomes, dtype=bool)
    flips = np.asarray(flips, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    N, M = mask.shape
    p_idle = np.asarray(p_idle, dtype=float)
    w = np.where(states, p_idle, 1.0 - p_idle).prod(axis=-1)
    p_one = np.where(states[:, None, :], pf_link, pd_link)
    bit_w = np.where(outcomes, p_one, 1.0 - p_one)
    w = w * np.where(mask, bit_w, np.where(outcomes, 0.0, 1.0)).prod(axis=(-1, -2))
    link = mask[None, :, :] & ~np.eye(N, dtype=bool)[:, :, None]
    pe3 = np.broadcast_to(np.asarray(pe, dtype=float)[:, :, None], (N, N, M))
    flip_w = np.where(flips, pe3, 1.0 - pe3)
    w = w * np.where(link, flip_w, np.where(flips, 0.0, 1.0)).prod(axis=(-1, -2, -3))
    return w


def _channel_patterns(j, p_idle, pd_link, pf_link, mask, a, pe):
    """(weight, idle flag, per-receiver P(declared idle)) for every state and
    sent-bit pattern of channel j, with duplicates merged."""
    N = mask.shape[0]
    sensors = np.flatnonzero(mask[:, j])
    if sensors.size == 0:
        return np.ones(1), np.zeros(1, dtype=bool), np.zeros((1, N))
    b = sensors.size
    bits = np.array(list(itertools.product((0, 1), repeat=b)), dtype=bool)  # (2^b, b)
    weights, idles, rows = [], [], []
    for idle, p_state, p_one in ((True, p_idle[j], pf_link[sensors, j]),
                                 (False, 1.0 - p_idle[j], pd_link[sensors, j])):
        if p_state == 0.0:
            continue
        w = p_state * np.where(bits, p_one, 1.0 - p_one).prod(axis=1)
        pe_rs = pe[:, sensors]  # receiver x sender
        same = sensors[None, :] == np.arange(N)[:, None]
        # probability that receiver r reads "busy" from sender s, per bit pattern
        read_one = np.where(bits[:, None, :], 1.0 - pe_rs, pe_rs)
        read_one = np.where(same, bits[:, None, :].astype(float), read_one)
        r_idle = 1.0 - upper_tail(count_distribution(read_one), np.int64(a))
        weights.append(w)
        idles.append(np.full(w.shape, idle))
        rows.append(r_idle)
    w = np.concatenate(weights)
    idle = np.concatenate(idles)
    r = np.clip(np.concatenate(rows), 0.0, 1.0)
    idle = idle & r.any(axis=1)  # a channel nobody declares idle contributes nothing
    keys = np.concatenate([idle[:, None].astype(float), r], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inverse.ravel(), w)
    keep = merged > 0
    return merged[keep], uniq[keep, 0].astype(bool), uniq[keep, 1:]


def reporting_occupancy(p_idle, pd_link, pf_link, mask, a_vec, pe,
                        budget: int = DEFAULT_PATTERN_BUDGET) -> np.ndarray:
    """O[j, n] = P(channel j is idle and exactly n SUs pick it)."""
    mask = np.asarray(mask, dtype=bool)
    N, M = mask.shape
    pe = np.asarray(pe, dtype=float)
    per_channel = [_channel_patterns(j, p_idle, pd_link, pf_link, mask, int(a_vec[j]), pe)
                   for j in range(M)]
    sizes = [len(w) for w, _, _ in per_channel]
    total = int(np.prod(sizes))
    if total > budget:
        raise BudgetExceeded(f"{total} joint channel patterns exceed the budget of {budget}; "
                             "use the simulator")
    inv_k = 1.0 / np.arange(1, M + 1)
    occ = np.zeros((M, N + 1))
    for start in range(0, total, _CHUNK):
        idx = np.unravel_index(np.arange(start, min(start + _CHUNK, total)), sizes)
        W = np.ones(idx[0].size)
        R = np.empty((idx[0].size, N, M))
        I = np.empty((idx[0].size, M), dtype=bool)
        for j, (w, idle, r) in enumerate(per_channel):
            W = W * w[idx[j]]
            R[:, :, j] = r[idx[j]]
            I[:, j] = idle[idx[j]]
        share = leave_one_out_counts(R) @ inv_k  # E[1 / (1 + K_{i,-j})]
        pick = R * share  # (C, N, M)
        counts = count_distribution(np.swapaxes(pick, 1, 2))  # (C, M, N+1)
        occ += np.einsum("c,cm,cmn->mn", W, I.astype(float), counts)
    return occ


def normalized_throughput_re(scenario: ScenarioConfig, params: SensingAccessParams,
                             assignment: SensingAssignment, error_model: ErrorModel | None,
                             method: str = "factored", floor: bool = True,
                             budget_scenarios: int | None = None) -> ThroughputReport:
    params.check(assignment, scenario.timing.T)
    N, M = scenario.N, scenario.M
    if error_model is None:
        error_model = ErrorModel.none(N)
    if error_model.N != N:
        raise ValueError(f"error model covers {error_model.N} SUs, scenario has {N}")
    pd_link, pf_link = link_probabilities_re(scenario, params, assignment, error_model)
    table = channel_throughput_table(scenario, params, floor)
    mask = assignment.matrix
    if method == "factored":
        occ = reporting_occupancy(scenario.p_idle, pd_link, pf_link, mask, params.a, error_model.pe,
                                  budget_scenarios or DEFAULT_PATTERN_BUDGET)
        per_channel = occ @ table
    elif method == "enumerate":
        per_channel = _enumerate_re(scenario, pd_link, pf_link, assignment, params.a, error_model.pe,
                                    table, budget_scenarios or DEFAULT_JOINT_BUDGET)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ThroughputReport(nt=float(per_channel.mean()), per_channel_nt=per_channel,
                            params_used=params, assignment_used=assignment, method=f"re-{method}")


def joint_pattern_space(mask):
    """Sizes of the state, sent-bit and flip-bit parts of the joint sample space."""
    mask = np.asarray(mask, dtype=bool)
    N, M = mask.shape
    n_bits = int(mask.sum())
    return M, n_bits, n_bits * (N - 1)


def _enumerate_re(scenario, pd_link, pf_link, assignment, a_vec, pe, table, budget):
    mask = assignment.matrix
    N, M = mask.shape
    n_state, n_bits, n_flips = joint_pattern_space(mask)
    total = 1 << (n_state + n_bits + n_flips)
    if total > budget:
        raise BudgetExceeded(f"{total} joint patterns exceed the budget of {budget}; use the simulator")
    bit_pos = np.argwhere(mask)  # (s, j)
    flip_pos = [(r, s, j) for s, j in bit_pos for r in range(N) if r != s]
    per_channel = np.zeros(M)
    for state_bits in itertools.product((0, 1), repeat=n_state):
        states = np.array(state_bits, dtype=bool)
        for out_bits in itertools.product((0, 1), repeat=n_bits):
            outcomes = np.zeros((N, M), dtype=bool)
            for (s, j), bit in zip(bit_pos, out_bits):
                outcomes[s, j] = bit
            for flip_bits in itertools.product((0, 1), repeat=n_flips):
                flips = np.zeros((N, N, M), dtype=bool)
                for (r, s, j), bit in zip(flip_pos, flip_bits):
                    flips[r, s, j] = bit
                w = pattern_probability(states[None], outcomes[None], flips[None], scenario.p_idle,
                                        pd_link, pf_link, mask, pe)[0]
                if w == 0.0:
                    continue
                views = receiver_views(states, outcomes, flips, assignment, a_vec)
                for j in range(M):
                    if states[j]:
                        only_j = [ReceiverView(v.su, v.truly_available & {j},
                                               v.erroneous | (v.truly_available - {j})) for v in views]
                        per_channel[j] += w * M * conditional_throughput_re(only_j, table, M)
    return per_channel
