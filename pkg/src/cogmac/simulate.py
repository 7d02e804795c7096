"""Cycle-level Monte Carlo simulation of the whole protocol.

Each cycle draws channel states, per-link sensing decisions and report
flips, lets every SU fuse what it received and pick a channel, and then
plays out slotted p-persistent contention on every channel until the data
phase is over.

Randomness comes from numpy's Philox counter-based generator.  Cycles are
processed in fixed blocks and block ``k`` of a run with seed ``s`` uses the
128-bit key ``(k << 64) | s``, so a block's draws do not depend on which
worker runs it and merging blocks in order gives the same result for any
worker count.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contention import frame_durations
from .model import ErrorModel, ScenarioConfig, SensingAccessParams, SensingAssignment
from .sensing import link_probabilities

BLOCK_CYCLES = 4096
SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SimSettings:
    seed: int = 0
    cycles: int = 10_000
    record_traces: bool = False
    workers: int = 1
    block: int = BLOCK_CYCLES

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.workers < 1 or self.block < 1:
            raise ValueError("workers and block must be >= 1")


@dataclass
class SimResult:
    nt_estimate: float
    stderr: float
    cycles: int
    seed: int
    successes: np.ndarray        # per channel, packets delivered on idle channels
    collisions: np.ndarray       # per channel, slots with two or more transmitters
    pu_collisions: np.ndarray    # per channel, lone transmissions on a busy channel
    idle_slots: np.ndarray       # per channel
    pd_empirical: np.ndarray     # (N, M), nan where the pair is unassigned or never busy
    pf_empirical: np.ndarray     # (N, M), nan where the pair is unassigned or never idle
    per_cycle_nt: np.ndarray = field(repr=False, default=None)
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def clean(arr):
            return [[None if np.isnan(v) else float(v) for v in row] for row in arr]

        return {
            "nt": self.nt_estimate,
            "stderr": self.stderr,
            "cycles": self.cycles,
            "seed": self.seed,
            "per_channel": {
                str(j + 1): {"successes": int(self.successes[j]), "collisions": int(self.collisions[j]),
                             "pu_collisions": int(self.pu_collisions[j]),
                             "idle_slots": int(self.idle_slots[j])}
                for j in range(len(self.successes))
            },
            "pd_empirical": clean(self.pd_empirical),
            "pf_empirical": clean(self.pf_empirical),
        }


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(block << 64) | (seed & SEED_MASK)))


class _Setup:
    def __init__(self, scenario, params, assignment, error_model):
        params.check(assignment, scenario.timing.T)
        self.sc = scenario
        self.mask = assignment.matrix
        self.a = params.a
        self.p = params.p
        self.pe = np.zeros((scenario.N, scenario.N)) if error_model is None else error_model.pe
        self.pd, self.pf = link_probabilities(scenario.snr, self.mask, params.a, scenario.pd_target,
                                              params.tau, scenario.f_s, error_model)
        frames = frame_durations(scenario.timing)
        self.t_succ = frames.t_rtscts + frames.t_success
        self.t_coll = frames.t_collision
        self.budget = max(scenario.timing.T - params.tau_max - scenario.reporting_time, 0.0) / scenario.timing.v
        self.unit = frames.t_success * scenario.timing.v / scenario.timing.T
        self.sensed = self.mask.any(axis=0)


def _run_block(setup: _Setup, seed: int, block: int, n_cycles: int, record: bool):
    rng = block_generator(seed, block)
    sc = setup.sc
    N, M = sc.N, sc.M
    mask = setup.mask
    idle = rng.random((n_cycles, M)) < sc.p_idle
    p_busy_report = np.where(idle[:, None, :], setup.pf, setup.pd)
    bits = (rng.random((n_cycles, N, M)) < p_busy_report) & mask
    pe = setup.pe.copy()
    np.fill_diagonal(pe, 0.0)
    flips = (rng.random((n_cycles, N, N, M)) < pe[None, :, :, None]) & mask[None, None, :, :]
    received = (bits[:, None, :, :] ^ flips) & mask  # [cycle, receiver, sender, channel]
    votes = received.sum(axis=2)
    declared_idle = (votes < setup.a) & setup.sensed  # (C, N, M)

    # each SU picks uniformly among the channels it believes idle
    k = declared_idle.sum(axis=2)
    pick = np.minimum((rng.random((n_cycles, N)) * k).astype(int), np.maximum(k - 1, 0))
    rank = np.cumsum(declared_idle, axis=2) - 1
    chosen = declared_idle & (rank == pick[:, :, None])
    n_on = chosen.sum(axis=1)  # (C, M)

    success, coll, pu_coll, idle_slots = _contend(rng, n_on, idle, setup)

    nt_cycle = success.sum(axis=1) * setup.unit / M
    busy = ~idle[:, None, :] & mask
    free = idle[:, None, :] & mask
    tallies = {
        "success": success.sum(axis=0), "coll": coll.sum(axis=0), "pu": pu_coll.sum(axis=0),
        "idle": idle_slots.sum(axis=0),
        "det": (bits & busy).sum(axis=0), "busy": busy.sum(axis=0),
        "fa": (bits & free).sum(axis=0), "free": free.sum(axis=0),
    }
    trace = []
    if record:
        for c in range(n_cycles):
            choice = [int(np.flatnonzero(chosen[c, i])[0]) + 1 if chosen[c, i].any() else 0 for i in range(N)]
            trace.append((c, "".join("1" if s else "0" for s in idle[c]),
                          " ".join(str(x) for x in choice), " ".join(str(int(s)) for s in success[c])))
    return nt_cycle, tallies, trace


def _contend(rng, n_on, idle, setup):
    """Slotted contention on every (cycle, channel) pair with at least one SU."""
    C, M = n_on.shape
    success = np.zeros((C, M), dtype=np.int64)
    coll = np.zeros((C, M), dtype=np.int64)
    pu_coll = np.zeros((C, M), dtype=np.int64)
    idle_slots = np.zeros((C, M), dtype=np.int64)
    lanes = np.flatnonzero(n_on.ravel() > 0)
    n = n_on.ravel()[lanes]
    free = idle.ravel()[lanes]
    used = np.zeros(lanes.size)
    s_cnt = np.zeros(lanes.size, dtype=np.int64)
    c_cnt = np.zeros(lanes.size, dtype=np.int64)
    pu_cnt = np.zeros(lanes.size, dtype=np.int64)
    i_cnt = np.zeros(lanes.size, dtype=np.int64)
    alive = np.arange(lanes.size)
    budget = setup.budget
    while alive.size:
        tx = rng.binomial(n[alive], setup.p)
        cost = np.where(tx == 0, 1.0, np.where((tx == 1) & free[alive], setup.t_succ, setup.t_coll))
        fits = used[alive] + cost <= budget + 1e-9
        ok = alive[fits]
        t_ok = tx[fits]
        used[ok] += cost[fits]
        won = t_ok == 1
        s_cnt[ok[won & free[ok]]] += 1
        pu_cnt[ok[won & ~free[ok]]] += 1
        c_cnt[ok[t_ok >= 2]] += 1
        i_cnt[ok[t_ok == 0]] += 1
        alive = ok
    for out, cnt in ((success, s_cnt), (coll, c_cnt), (pu_coll, pu_cnt), (idle_slots, i_cnt)):
        out.ravel()[lanes] = cnt
    return success, coll, pu_coll, idle_slots


def simulate(scenario: ScenarioConfig, params: SensingAccessParams, assignment: SensingAssignment,
             error_model: ErrorModel | None = None, settings: SimSettings = SimSettings()) -> SimResult:
    """Estimate the normalized throughput with ``settings.cycles`` simulated cycles."""
    if assignment.N != scenario.N or assignment.M != scenario.M:
        raise ValueError("assignment does not match the scenario dimensions")
    if error_model is not None and error_model.N != scenario.N:
        raise ValueError("error model does not match the number of SUs")
    setup = _Setup(scenario, params, assignment, error_model)
    sizes = []
    left = settings.cycles
    while left > 0:
        sizes.append(min(settings.block, left))
        left -= sizes[-1]

    def job(k):
        return _run_block(setup, settings.seed, k, sizes[k], settings.record_traces)

    if settings.workers == 1:
        parts = [job(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))

    per_cycle = np.concatenate([p[0] for p in parts])
    tallies = {key: sum(p[1][key] for p in parts) for key in parts[0][1]}
    trace = []
    offset = 0
    for size, part in zip(sizes, parts):
        trace.extend((offset + row[0],) + row[1:] for row in part[2])
        offset += size
    with np.errstate(invalid="ignore", divide="ignore"):
        pd_emp = np.where(setup.mask & (tallies["busy"] > 0), tallies["det"] / tallies["busy"], np.nan)
        pf_emp = np.where(setup.mask & (tallies["free"] > 0), tallies["fa"] / tallies["free"], np.nan)
    stderr = float(per_cycle.std(ddof=1) / np.sqrt(per_cycle.size)) if per_cycle.size > 1 else 0.0
    return SimResult(nt_estimate=float(per_cycle.mean()), stderr=stderr, cycles=settings.cycles,
                     seed=settings.seed, successes=tallies["success"], collisions=tallies["coll"],
                     pu_collisions=tallies["pu"], idle_slots=tallies["idle"], pd_empirical=pd_emp,
                     pf_empirical=pf_emp, per_cycle_nt=per_cycle, trace=trace)


def write_trace(result: SimResult, path) -> None:
    """One line per cycle: index, idle flags per channel, channel picked by each
    SU (0 = none), packets delivered per channel."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cycle", "idle_channels", "choices", "packets"])
    writer.writerows(result.trace)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
