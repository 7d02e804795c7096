"""Energy-detector statistics and hard-decision fusion.

A report of 1 means "busy".  Under the a-out-of-b rule a channel is declared
busy when at least ``a`` of the ``b`` reports are busy, so the fused detection
and false-alarm probabilities are upper tails of a Poisson-binomial count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special

from .model import ErrorModel


class InfeasibleTarget(ValueError):
    """A fused detection target cannot be reached."""


def q_function(x):
    """Gaussian tail probability Q(x) = P(Z > x)."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError(f"q_inverse needs probabilities strictly inside (0, 1), got {p!r}")
    # -ndtri(p) keeps full relative precision for p close to 0.
    out = -special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def _check_positive(**values):
    for name, value in values.items():
        if np.any(~(np.asarray(value, dtype=float) > 0)):
            raise ValueError(f"{name} must be > 0, got {value!r}")


def detection_probability(eps_over_N0, tau, gamma, f_s):
    """P_d of an energy detector with normalized threshold ``eps_over_N0``."""
    _check_positive(tau=tau, f_s=f_s, gamma=gamma)
    gamma = np.asarray(gamma, dtype=float)
    arg = (np.asarray(eps_over_N0, dtype=float) - gamma - 1.0) * np.sqrt(
        np.asarray(tau, dtype=float) * f_s / (2.0 * gamma + 1.0))
    return q_function(arg)


def false_alarm_probability(pd, tau, gamma, f_s):
    """P_f reached when the threshold is set so that detection equals ``pd``."""
    _check_positive(tau=tau, f_s=f_s)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("gamma must be >= 0")
    arg = np.sqrt(2.0 * gamma + 1.0) * q_inverse(pd) + np.sqrt(np.asarray(tau, dtype=float) * f_s) * gamma
    return q_function(arg)


def sensing_time_for(pd, pf, gamma, f_s):
    """Shortest sensing time at which detection ``pd`` comes with false alarm
    at most ``pf`` (never below one sample, 1 / f_s)."""
    _check_positive(gamma=gamma, f_s=f_s)
    gamma = np.asarray(gamma, dtype=float)
    root = (q_inverse(pf) - np.sqrt(2.0 * gamma + 1.0) * q_inverse(pd)) / gamma
    out = np.maximum(np.maximum(root, 0.0) ** 2 / f_s, 1.0 / f_s)
    return float(out) if np.ndim(out) == 0 else out


def threshold_for_detection(pd, tau, gamma, f_s):
    """Normalized threshold ε/N0 giving detection probability ``pd``."""
    _check_positive(tau=tau, f_s=f_s, gamma=gamma)
    gamma = np.asarray(gamma, dtype=float)
    out = gamma + 1.0 + q_inverse(pd) * np.sqrt((2.0 * gamma + 1.0) / (np.asarray(tau, dtype=float) * f_s))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LinkSensingStats:
    pd: float
    pf: float
    tau: float
    eps_over_N0: float

    @classmethod
    def at_target(cls, pd: float, tau: float, gamma: float, f_s: float) -> "LinkSensingStats":
        return cls(pd=pd, pf=false_alarm_probability(pd, tau, gamma, f_s), tau=tau,
                   eps_over_N0=threshold_for_detection(pd, tau, gamma, f_s))


def count_distribution(probs) -> np.ndarray:
    """pmf of the number of successes among independent Bernoulli trials.

    ``probs`` has the trials on its last axis; the result has length b + 1
    on that axis and broadcasts over the leading ones.
    """
    probs = np.asarray(probs, dtype=float)
    b = probs.shape[-1]
    pmf = np.zeros(probs.shape[:-1] + (b + 1,))
    pmf[..., 0] = 1.0
    for k in range(b):
        q = probs[..., k:k + 1]
        shifted = pmf[..., :k + 1] * q
        pmf[..., :k + 2] *= 1.0 - q
        pmf[..., 1:k + 2] += shifted
    return pmf


def upper_tail(pmf, a):
    """P(count >= a) from a count pmf (``a`` may be an array broadcasting
    against the leading axes)."""
    pmf = np.asarray(pmf)
    a = np.asarray(a)
    ks = np.arange(pmf.shape[-1])
    return np.where(ks >= a[..., None], pmf, 0.0).sum(axis=-1)


def fuse_a_out_of_b(per_su_probs: Sequence[float], a: int) -> float:
    """Probability that at least ``a`` of the independent reports are 1."""
    probs = np.asarray(per_su_probs, dtype=float).ravel()
    b = probs.size
    if b == 0:
        raise ValueError("fusion needs at least one report")
    if not 1 <= a <= b:
        raise ValueError(f"threshold a={a} outside [1, {b}]")
    pmf = count_distribution(probs)
    return float(min(1.0, max(0.0, pmf[a:].sum())))


def _bisect_increasing(fn, target: float, lo: float = 0.0, hi: float = 1.0, iters: int = 200,
                       tol: float = 1e-15) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@lru_cache(maxsize=4096)
def per_su_target(pd_hat: float, a: int, b: int) -> float:
    """Common per-SU detection probability making the a-out-of-b fusion hit ``pd_hat``."""
    if not 0.0 < pd_hat < 1.0:
        raise InfeasibleTarget(f"detection target must lie in (0, 1), got {pd_hat}")
    if not 1 <= a <= b:
        raise ValueError(f"threshold a={a} outside [1, {b}]")
    if a == b == 1:
        return float(pd_hat)
    return _bisect_increasing(lambda x: fuse_a_out_of_b([x] * b, a), pd_hat)


def effective_report_probability(p_u, pe, same_su: bool = False):
    """Probability that a received report reads 1 when the sent bit is 1 w.p. ``p_u``."""
    if same_su:
        return p_u
    return p_u * (1.0 - pe) + (1.0 - p_u) * pe


def fused_with_errors(receiver: int, per_sender_probs: Sequence[float], senders: Sequence[int],
                      error_model: ErrorModel | None, a: int) -> float:
    """a-out-of-b fusion as seen by ``receiver`` after the reports cross noisy links."""
    probs = np.asarray(per_sender_probs, dtype=float)
    senders = list(senders)
    if probs.size != len(senders):
        raise ValueError("one probability per sender is required")
    if error_model is None:
        return fuse_a_out_of_b(probs, a)
    N = error_model.N
    if not 0 <= receiver < N or any(not 0 <= s < N for s in senders):
        raise ValueError(f"SU index outside [0, {N})")
    pe = error_model.pe[receiver, senders]
    eff = probs * (1.0 - pe) + (1.0 - probs) * pe
    return fuse_a_out_of_b(eff, a)


def per_su_target_with_errors(pd_hat: float, a: int, senders: Sequence[int],
                              error_model: ErrorModel) -> float:
    """Common per-SU detection probability so that the worst receiver's fused
    detection probability equals ``pd_hat``.

    Every SU fuses every channel, so the receivers are all SUs.  Link error
    rates above 0.5 would make the fused value decreasing in the per-SU
    probability and are rejected.
    """
    senders = list(senders)
    if not 0.0 < pd_hat < 1.0:
        raise InfeasibleTarget(f"detection target must lie in (0, 1), got {pd_hat}")
    if not 1 <= a <= len(senders):
        raise ValueError(f"threshold a={a} outside [1, {len(senders)}]")
    if np.any(error_model.pe[:, senders] > 0.5):
        raise InfeasibleTarget("reporting error rates above 0.5 are not supported")

    def worst(x: float) -> float:
        return min(fused_with_errors(r, [x] * len(senders), senders, error_model, a)
                   for r in range(error_model.N))

    best = worst(1.0)
    if best < pd_hat:
        raise InfeasibleTarget(
            f"with a={a} of b={len(senders)} the worst receiver reaches at most {best:.6g} < {pd_hat}")
    return _bisect_increasing(worst, pd_hat)


def link_probabilities(snr, mask, a_vec, pd_target, tau, f_s, error_model: ErrorModel | None = None):
    """Equalized per-link detection and the resulting false-alarm probabilities.

    Returns ``(pd, pf)`` as N x M arrays; entries for unassigned pairs are 0.
    """
    mask = np.asarray(mask, dtype=bool)
    N, M = mask.shape
    pd = np.zeros((N, M))
    pf = np.zeros((N, M))
    use_errors = error_model is not None and not error_model.is_zero
    for j in range(M):
        sensors = np.flatnonzero(mask[:, j])
        if sensors.size == 0:
            continue
        a = int(a_vec[j])
        if use_errors:
            x = per_su_target_with_errors(float(pd_target[j]), a, sensors, error_model)
        else:
            x = per_su_target(float(pd_target[j]), a, int(sensors.size))
        pd[sensors, j] = x
        pf[sensors, j] = false_alarm_probability(x, np.asarray(tau)[sensors, j], np.asarray(snr)[sensors, j], f_s)
    return pd, pf
