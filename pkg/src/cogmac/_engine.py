"""Batched evaluation and coordinate descent for the sensing/access optimizer.

A *lane* is one optimization problem: an assignment mask, a way of choosing
the fusion thresholds (fixed per channel, or folded: pick the threshold with
the smallest fused false-alarm probability) and a set of allowed access
probabilities (the objective takes the best one).  Many lanes are advanced in
lock-step so that brute-force and greedy searches cost a few large numpy
calls instead of many small ones.

Lanes never interact: every line search uses the same iteration count, so a
lane's result does not depend on which other lanes share its batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contention import efficiency_table, frame_durations, packet_table
from .model import ErrorModel, ScenarioConfig
from .sensing import count_distribution, per_su_target, per_su_target_with_errors, q_function, q_inverse
from .throughput_exact import per_channel_occupancy
from .throughput_reporting import reporting_occupancy

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_iterations(width: float, tol: float) -> int:
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))


def golden_max(fn, lo, hi, n_iter: int):
    """Vectorized golden-section maximization on per-lane brackets.

    ``fn`` maps an array of points (one per lane) to values.  The endpoints
    are evaluated too and the best of all probed points is returned, ties
    going to the smallest point.  A lane whose probes all tie returns the
    bracket midpoint.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    f_lo, f_hi = fn(lo), fn(hi)
    a, b = lo.copy(), hi.copy()
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(n_iter):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - INV_PHI * (b - a)
        new_d = a + INV_PHI * (b - a)
        x_new = np.where(left, new_c, new_d)
        f_new = fn(x_new)
        c, d, fc, fd = (np.where(left, new_c, d), np.where(left, c, new_d),
                        np.where(left, f_new, fd), np.where(left, fc, f_new))
    xs = np.stack([lo, c, d, hi])
    fs = np.stack([f_lo, fc, fd, f_hi])
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    fs = np.take_along_axis(fs, order, axis=0)
    best = np.argmax(fs, axis=0)
    cols = np.arange(xs.shape[1]) if xs.ndim > 1 else None
    if cols is None:
        x_best, f_best = xs[best], fs[best]
        flat = bool(np.all(fs == fs[0]))
        return ((lo + hi) / 2.0 if flat else x_best), f_best
    x_best, f_best = xs[best, cols], fs[best, cols]
    flat = np.all(fs == fs[0], axis=0)
    return np.where(flat, (lo + hi) / 2.0, x_best), f_best


@dataclass
class LaneResult:
    tau: np.ndarray          # (L, N, M)
    value: np.ndarray        # relaxed objective at the end
    p: np.ndarray            # access probability chosen per lane
    a: np.ndarray            # (L, M) thresholds chosen per lane, 0 for unsensed channels
    nt_exact: np.ndarray     # exact-floor throughput at (tau, a, p)
    traces: list = field(default_factory=list)


class LaneProblem:
    """Objective for a batch of lanes on one scenario."""

    def __init__(self, scenario: ScenarioConfig, masks, a_fixed=None, p_grid=None, p_fixed=None,
                 error_model: ErrorModel | None = None, relax_floor: bool = True):
        self.sc = scenario
        self.masks = np.asarray(masks, dtype=bool)
        L, N, M = self.masks.shape
        self.L, self.N, self.M = L, N, M
        self.b = self.masks.sum(axis=1)  # (L, M)
        self.timing = scenario.timing
        self.frames = frame_durations(scenario.timing)
        self.T_R = scenario.reporting_time
        self.relax_floor = relax_floor
        self.errors = error_model if (error_model is not None and not error_model.is_zero) else None
        if self.errors is not None and a_fixed is None:
            raise ValueError("thresholds must be fixed when reporting errors are modeled")

        if p_fixed is not None:
            self.p_values = np.asarray(p_fixed, dtype=float).reshape(L, 1)
        else:
            self.p_values = np.broadcast_to(np.asarray(p_grid, dtype=float), (L, len(p_grid)))
        self.shared_p = p_fixed is None
        if self.shared_p:
            self.G = efficiency_table(N, self.p_values[0], self.frames)[None]  # (1, N+1, P)
        else:
            self.G = np.stack([efficiency_table(N, p, self.frames) for p in self.p_values])

        gamma = scenario.snr
        self.c2 = math.sqrt(scenario.f_s) * gamma  # (N, M)
        root = np.sqrt(2.0 * gamma + 1.0)
        pd_hat = scenario.pd_target
        if a_fixed is not None:
            a_fixed = np.asarray(a_fixed, dtype=int).reshape(L, M)
            self.cands = a_fixed[:, None, :]  # (L, 1, M)
        else:
            A = max(int(self.b.max()), 1)
            self.cands = np.broadcast_to(np.arange(1, A + 1)[None, :, None], (L, A, M)).copy()
        A = self.cands.shape[1]
        self.valid = (self.cands >= 1) & (self.cands <= self.b[:, None, :])  # (L, A, M)
        self.c1 = np.zeros((L, A, N, M))
        self.pd_link = np.zeros((L, A, N, M))
        cache: dict = {}
        for l in range(L):
            for k in range(A):
                for j in range(M):
                    if not self.valid[l, k, j]:
                        continue
                    a, bj = int(self.cands[l, k, j]), int(self.b[l, j])
                    sensors = np.flatnonzero(self.masks[l, :, j])
                    if self.errors is None:
                        key = (j, a, bj)
                        if key not in cache:
                            cache[key] = per_su_target(float(pd_hat[j]), a, bj)
                    else:
                        key = (j, a, tuple(sensors))
                        if key not in cache:
                            cache[key] = per_su_target_with_errors(float(pd_hat[j]), a, sensors, self.errors)
                    x = cache[key]
                    self.pd_link[l, k, sensors, j] = x
                    self.c1[l, k, sensors, j] = root[sensors, j] * q_inverse(x)
        self.sensing = self.masks[:, None, :, :]  # (L, 1, N, M)
        self.empty = self.b == 0  # (L, M)

    # -- pieces ------------------------------------------------------------
    def _fused_false_alarm(self, tau, lanes):
        """Fused false alarm per lane/candidate/channel, inf for invalid candidates."""
        pf = q_function(self.c1[lanes] + self.c2 * np.sqrt(tau[:, None]))
        pf = np.where(self.sensing[lanes], pf, 0.0)
        pmf = count_distribution(np.swapaxes(pf, -1, -2))  # (l, A, M, N+1)
        ks = np.arange(self.N + 1)
        tail = np.where(ks >= self.cands[lanes][..., None], pmf, 0.0).sum(axis=-1)
        return np.where(self.valid[lanes], tail, np.inf), pf

    def _occupancy(self, tau, lanes):
        """Per-lane D[n] = sum_j P(channel j idle and n SUs pick it), and the
        chosen candidate index per channel."""
        fused, pf = self._fused_false_alarm(tau, lanes)
        if self.errors is None:
            return self._occupancy_from_fused(fused, lanes)
        p0 = self.sc.p_idle
        D = np.zeros((len(lanes), self.N + 1))
        for k, l in enumerate(lanes):
            occ = reporting_occupancy(p0, self.pd_link[l, 0], pf[k, 0], self.masks[l], self.cands[l, 0],
                                      self.errors.pe)
            D[k] = occ.sum(axis=0)
        return D, np.zeros((len(lanes), self.M), dtype=int)

    def _occupancy_from_fused(self, fused, lanes):
        p0 = self.sc.p_idle
        choice = np.argmin(fused, axis=1)  # (l, M) first minimum -> smallest threshold
        pf_j = np.take_along_axis(fused, choice[:, None, :], axis=1)[:, 0]
        empty = self.empty[lanes]
        pf_j = np.where(empty, 1.0, pf_j)
        pd_j = np.where(empty, 1.0, self.sc.pd_target)
        occ = per_channel_occupancy(p0 * (1.0 - pf_j), (1.0 - p0) * (1.0 - pd_j), self.N)
        return occ.sum(axis=1), choice

    # -- single-row updates ----------------------------------------------------
    def row_context(self, tau, lanes, i):
        """Everything needed to re-evaluate lanes when only SU i's row changes."""
        if self.errors is not None:
            return {"tau": tau}
        pf = q_function(self.c1[lanes] + self.c2 * np.sqrt(tau[:, None]))
        pf = np.where(self.sensing[lanes], pf, 0.0)
        pf[:, :, i, :] = 0.0
        pmf = count_distribution(np.swapaxes(pf, -1, -2))  # (l, A, M, N+1)
        a = self.cands[lanes]
        ks = np.arange(self.N + 1)
        ge = np.where(ks >= a[..., None], pmf, 0.0).sum(axis=-1)
        eq = np.take_along_axis(pmf, np.clip(a - 1, 0, self.N)[..., None], axis=-1)[..., 0]
        sums = tau.sum(axis=2)
        sums[:, i] = 0.0
        return {"ge": ge, "eq": eq, "others": sums.max(axis=1), "tau": tau}

    def value_row(self, ctx, row, lanes, i):
        """Objective with SU i's sensing times replaced by ``row`` (l, M)."""
        if self.errors is not None:
            trial = ctx["tau"].copy()
            trial[:, i, :] = row
            return self.value(trial, lanes)
        q = q_function(self.c1[lanes][:, :, i, :] + self.c2[i] * np.sqrt(row[:, None, :]))
        q = np.where(self.masks[lanes][:, None, i, :], q, 0.0)
        fused = np.where(self.valid[lanes], ctx["ge"] + q * ctx["eq"], np.inf)
        D, _ = self._occupancy_from_fused(fused, lanes)
        tau_max = np.maximum(ctx["others"], row.sum(axis=1))
        return self._best_over_p(D, tau_max, lanes, not self.relax_floor)[0]

    def _efficiency(self, tau_max, lanes, floor: bool):
        if not floor:
            frac = np.maximum(1.0 - (tau_max + self.T_R) / self.timing.T, 0.0)
            G = self.G if self.shared_p else self.G[lanes]
            return frac[:, None, None] * G
        return np.stack([packet_table(self.N, self.p_values[l], self.timing, self.frames, t, self.T_R)
                         for l, t in zip(lanes, tau_max)]) if not self.shared_p else \
            packet_table(self.N, self.p_values[0], self.timing, self.frames, tau_max, self.T_R)

    # -- objective -----------------------------------------------------------
    def evaluate(self, tau, lanes, floor: bool | None = None):
        """Best value over the allowed p for each lane, with the p index and thresholds."""
        floor = (not self.relax_floor) if floor is None else floor
        tau = np.asarray(tau, dtype=float)
        D, choice = self._occupancy(tau, lanes)
        tau_max = tau.sum(axis=2).max(axis=1)
        value, best = self._best_over_p(D, tau_max, lanes, floor)
        return value, best, choice

    def _best_over_p(self, D, tau_max, lanes, floor):
        E = self._efficiency(tau_max, lanes, floor)
        vals = np.einsum("ln,lnp->lp", D, np.broadcast_to(E, (len(lanes),) + E.shape[1:])) / self.M
        best = np.argmax(vals, axis=1)
        return vals[np.arange(len(lanes)), best], best

    def value(self, tau, lanes):
        return self.evaluate(tau, lanes)[0]

    def thresholds(self, choice, lanes):
        a = np.take_along_axis(self.cands[lanes], choice[:, None, :], axis=1)[:, 0]
        return np.where(self.empty[lanes], 0, a)

    def exact_at_p(self, tau, lanes, p):
        """Exact-floor throughput for each lane at its own access probability."""
        D, _ = self._occupancy(tau, lanes)
        tau_max = tau.sum(axis=2).max(axis=1)
        out = np.empty(len(lanes))
        for k in range(len(lanes)):
            table = packet_table(self.N, [p[k]], self.timing, self.frames, tau_max[k], self.T_R)[:, 0]
            out[k] = D[k] @ table / self.M
        return out

    def relaxed_at_p(self, tau, lanes, p):
        D, _ = self._occupancy(tau, lanes)
        tau_max = tau.sum(axis=2).max(axis=1)
        frac = np.maximum(1.0 - (tau_max + self.T_R) / self.timing.T, 0.0)
        G = efficiency_table(self.N, p, self.frames)  # (N+1, l)
        return frac * np.einsum("ln,nl->l", D, G) / self.M


def _clamp(tau, mask, t_min):
    """Keep every assigned sensing time at or above ``t_min``."""
    return np.where(mask, np.maximum(tau, t_min), 0.0)


def _scale_row(base, s, i, mask, t_min):
    out = base.copy()
    out[:, i, :] = _clamp(base[:, i, :] * s[:, None], mask[:, i, :], t_min)
    return out


def _shift_row(row, x, j, mask, t_min):
    """Set row[:, j] = x and rescale the other entries to keep the row total
    (as far as the ``t_min`` floor allows)."""
    total = row.sum(axis=1)
    others = total - row[:, j]
    factor = np.where(others > 0, (total - x) / np.where(others > 0, others, 1.0), 0.0)
    out = _clamp(row * factor[:, None], mask, t_min)
    out[:, j] = x
    return out


def _shift(base, x, i, j, mask, t_min):
    out = base.copy()
    out[:, i, :] = _shift_row(base[:, i, :], x, j, mask[:, i, :], t_min)
    return out


def _accept(tau, value, lanes, found, build):
    """Keep a line-search result only where it strictly improves the lane.

    ``build(sel, x)`` returns the new sensing times of the selected lanes.
    """
    x, v = found
    better = v > value[lanes]
    if better.any():
        tau[lanes[better]] = build(better, x[better])
        value[lanes[better]] = v[better]


def optimize_lanes(problem: LaneProblem, tau_tol: float = 1e-6, rel_tol: float = 1e-6,
                   max_rounds: int = 50, scale_move: bool = True, refine_p: bool = True,
                   record: bool = False) -> LaneResult:
    """Initialize with equal splits, then run coordinate descent on every lane."""
    L, N, M = problem.L, problem.N, problem.M
    sc = problem.sc
    t_min = 1.0 / sc.f_s
    window = sc.timing.T - problem.T_R
    masks = problem.masks.astype(float)
    all_lanes = np.arange(L)
    n_iter = golden_iterations(window, tau_tol)

    # equal split of a common per-SU sensing budget
    counts = problem.masks.sum(axis=2)  # (L, N)
    share = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)[:, :, None] * masks  # (L, N, M)
    live = np.flatnonzero(problem.masks.any(axis=(1, 2)))
    tau = np.zeros((L, N, M))
    value = np.zeros(L)
    if live.size:
        lo = counts[live].max(axis=1) * t_min

        def f_total(t):
            return problem.value(share[live] * t[:, None, None], live)

        t_best, v_best = golden_max(f_total, lo, np.full(live.size, window), n_iter)
        tau[live] = share[live] * t_best[:, None, None]
        value[live] = v_best
    traces = [[(0, float(v))] for v in value] if record else []

    active = np.zeros(L, dtype=bool)
    active[live] = True
    for rnd in range(1, max_rounds + 1):
        if not active.any():
            break
        start = value.copy()
        for i in range(N):
            # SU i's total sensing time
            lanes = np.flatnonzero(active & problem.masks[:, i, :].any(axis=1))
            if lanes.size:
                base = tau[lanes]
                ctx = problem.row_context(base, lanes, i)
                row0 = base[:, i, :]
                total = row0.sum(axis=1)
                lo = np.minimum(counts[lanes, i] * t_min, total)

                rmask = problem.masks[lanes, i, :]

                def f_row(x, ctx=ctx, row0=row0, total=total, lanes=lanes, rmask=rmask):
                    return problem.value_row(ctx, _clamp(row0 * (x / total)[:, None], rmask, t_min), lanes, i)

                _accept(tau, value, lanes, golden_max(f_row, lo, np.full(lanes.size, window), n_iter),
                        lambda sel, x, base=base, total=total, lanes=lanes, i=i:
                        _scale_row(base[sel], x / total[sel], i, problem.masks[lanes[sel]], t_min))
            for j in range(M):
                # move time between channel j and SU i's other channels, total fixed
                lanes = np.flatnonzero(active & problem.masks[:, i, j] & (counts[:, i] > 1))
                if lanes.size == 0:
                    continue
                base = tau[lanes]
                ctx = problem.row_context(base, lanes, i)
                row0 = base[:, i, :]
                total = row0.sum(axis=1)
                lo = np.full(lanes.size, t_min)
                hi = np.maximum(total - (counts[lanes, i] - 1) * t_min, lo)

                rmask = problem.masks[lanes, i, :]

                def f_shift(x, ctx=ctx, row0=row0, lanes=lanes, j=j, rmask=rmask):
                    return problem.value_row(ctx, _shift_row(row0, x, j, rmask, t_min), lanes, i)

                _accept(tau, value, lanes, golden_max(f_shift, lo, hi, n_iter),
                        lambda sel, x, base=base, lanes=lanes, i=i, j=j:
                        _shift(base[sel], x, i, j, problem.masks[lanes[sel]], t_min))
        if scale_move:
            # stretch or shrink every sensing time together
            lanes = np.flatnonzero(active)
            base = tau[lanes]
            lmask = problem.masks[lanes]
            peak = base.sum(axis=2).max(axis=1)
            lo = np.minimum(counts[lanes].max(axis=1) * t_min, peak)

            def f_scale(x, base=base, peak=peak, lanes=lanes, lmask=lmask):
                return problem.value(_clamp(base * (x / peak)[:, None, None], lmask, t_min), lanes)

            x, v = golden_max(f_scale, lo, np.full(lanes.size, window), n_iter)
            better = v > value[lanes]
            upd = lanes[better]
            tau[upd] = _clamp(base[better] * (x[better] / peak[better])[:, None, None], lmask[better], t_min)
            value[upd] = v[better]
        gain = value - start
        if record:
            for l in np.flatnonzero(active):
                traces[l].append((rnd, float(value[l])))
        done = gain <= rel_tol * np.abs(start)
        active &= ~done

    _, p_idx, choice = problem.evaluate(tau, all_lanes)
    a = problem.thresholds(choice, all_lanes)
    p, nt = _finish_p(problem, tau, p_idx, refine_p)
    return LaneResult(tau=tau, value=value, p=p, a=a, nt_exact=nt, traces=traces)


def _finish_p(problem: LaneProblem, tau, p_idx, refine: bool):
    """Pick the reported access probability using the exact-floor objective.

    Candidates are the best grid point, its two neighbours and (optionally) a
    golden refinement of the relaxed objective between those neighbours.
    """
    L = problem.L
    lanes = np.arange(L)
    if not problem.shared_p:
        p = problem.p_values[:, 0].copy()
        return p, problem.exact_at_p(tau, lanes, p)
    grid = problem.p_values[0]
    P = grid.size
    cand = [grid[np.clip(p_idx + off, 0, P - 1)] for off in (-1, 0, 1)]
    if refine and P > 1:
        lo, hi = cand[0], cand[2]

        def f_p(x):
            return problem.relaxed_at_p(tau, lanes, x)

        x, _ = golden_max(f_p, lo, hi, golden_iterations(1.0, 1e-6))
        cand.append(x)
    cand = np.stack(cand)  # (C, L)
    vals = np.stack([problem.exact_at_p(tau, lanes, c) for c in cand])
    order = np.argsort(cand, axis=0, kind="stable")
    cand = np.take_along_axis(cand, order, axis=0)
    vals = np.take_along_axis(vals, order, axis=0)
    best = np.argmax(vals, axis=0)
    return cand[best, lanes], vals[best, lanes]


def fold_is_exact(scenario: ScenarioConfig, p_grid) -> bool:
    """True when making a channel more likely to be seen idle (when it is idle)
    can never lower the objective, for every allowed p.

    With k1 earning channels among k_e perceived ones the objective is
    proportional to k1 * h(k_e); the check is that adding one earning channel
    never hurts.
    """
    from .throughput_exact import binomial_occupancy

    N, M = scenario.N, scenario.M
    G = efficiency_table(N, p_grid, frame_durations(scenario.timing))
    h = binomial_occupancy(N, M) @ G  # (M, P): h[k_e - 1]
    for ke in range(0, M):
        for k1 in range(0, ke + 1):
            now = k1 * h[ke - 1] if ke > 0 else np.zeros(G.shape[1])
            nxt = (k1 + 1) * h[ke]
            if np.any(nxt < now - 1e-15):
                return False
    return True
