import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogmac.model import ErrorModel
from cogmac.sensing import (InfeasibleTarget, count_distribution, detection_probability,
                            false_alarm_probability, fuse_a_out_of_b, fused_with_errors, link_probabilities,
                            per_su_target, per_su_target_with_errors, q_function, q_inverse,
                            sensing_time_for, threshold_for_detection, upper_tail)

F_S = 6e6


def brute_fusion(probs, a):
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(probs)):
        if sum(bits) >= a:
            total += math.prod(p if b else 1 - p for p, b in zip(probs, bits))
    return total


def bisect_qinv(p, lo=-40.0, hi=40.0):
    # Q is decreasing, so look for x with Q(x) = p; compare at high precision
    with mpmath.workdps(50):
        target = mpmath.mpf(p)
        lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
        for _ in range(200):
            mid = (lo + hi) / 2
            if mpmath.erfc(mid / mpmath.sqrt(2)) / 2 > target:
                lo = mid
            else:
                hi = mid
        return float((lo + hi) / 2)


@pytest.mark.parametrize("x", [-6.0, -1.3, 0.0, 0.4, 2.5, 8.0, 20.0, 37.0])
def test_q_function_matches_mpmath(x):
    ref = float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)
    assert q_function(x) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("p", [1e-12, 1e-5, 0.01, 0.1, 0.5, 0.9, 0.99, 1 - 1e-9])
def test_q_inverse_matches_bisection(p):
    assert q_inverse(p) == pytest.approx(bisect_qinv(p), abs=1e-9)


def test_q_inverse_rejects_out_of_range():
    with pytest.raises(ValueError):
        q_inverse(1.5)


def test_threshold_round_trip():
    gamma, tau = 10 ** (-1.5), 2e-3
    eps = threshold_for_detection(0.9, tau, gamma, F_S)
    assert detection_probability(eps, tau, gamma, F_S) == pytest.approx(0.9, abs=1e-12)


def test_false_alarm_falls_with_sensing_time():
    gamma = 10 ** (-2.0)
    pf = false_alarm_probability(0.9, np.array([1e-4, 1e-3, 1e-2]), gamma, F_S)
    assert np.all(np.diff(pf) < 0)
    # at one sample the detector can barely separate the hypotheses
    assert false_alarm_probability(0.9, 1 / F_S, gamma, F_S) > 0.85


def test_false_alarm_closed_form_value():
    # Q(sqrt(2g+1) Q^-1(0.9) + sqrt(tau fs) g) evaluated independently with mpmath
    g, tau = 0.1, 1e-3
    arg = mpmath.sqrt(2 * g + 1) * bisect_qinv(0.9) + mpmath.sqrt(tau * F_S) * g
    ref = float(mpmath.erfc(arg / mpmath.sqrt(2)) / 2)
    assert false_alarm_probability(0.9, tau, g, F_S) == pytest.approx(ref, rel=1e-9)


def test_sensing_time_for_inverts_false_alarm():
    gamma = np.array([10 ** (-1.5), 10 ** (-2.0)])
    tau = sensing_time_for(0.9, 0.05, gamma, F_S)
    assert np.allclose(false_alarm_probability(0.9, tau, gamma, F_S), 0.05, rtol=1e-9)
    # a loose target is met by a single sample
    assert sensing_time_for(0.9, 0.95, 1.0, F_S) == pytest.approx(1 / F_S)


@pytest.mark.parametrize("b", range(1, 7))
def test_fusion_matches_brute_force(b):
    rng = np.random.default_rng(b)
    for _ in range(20):
        probs = rng.random(b)
        for a in range(1, b + 1):
            assert fuse_a_out_of_b(probs, a) == pytest.approx(brute_fusion(probs, a), abs=1e-12)


def test_fusion_special_rules():
    probs = [0.3, 0.6, 0.8]
    assert fuse_a_out_of_b(probs, 1) == pytest.approx(1 - 0.7 * 0.4 * 0.2)
    assert fuse_a_out_of_b(probs, 3) == pytest.approx(0.3 * 0.6 * 0.8)
    with pytest.raises(ValueError):
        fuse_a_out_of_b(probs, 4)
    with pytest.raises(ValueError):
        fuse_a_out_of_b([], 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_count_distribution_is_a_pmf(probs):
    pmf = count_distribution(np.array(probs))
    assert pmf.shape == (len(probs) + 1,)
    assert pmf.min() >= -1e-15
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(np.arange(len(probs) + 1), pmf) == pytest.approx(sum(probs), abs=1e-10)
    assert upper_tail(pmf, 0) == pytest.approx(1.0)


@pytest.mark.parametrize("b", [1, 2, 3, 5])
def test_per_su_target_or_and_closed_forms(b):
    assert per_su_target(0.9, 1, b) == pytest.approx(1 - 0.1 ** (1 / b), abs=1e-12)
    assert per_su_target(0.9, b, b) == pytest.approx(0.9 ** (1 / b), abs=1e-12)


def test_per_su_target_reaches_pd_hat():
    for b in range(1, 7):
        for a in range(1, b + 1):
            x = per_su_target(0.9, a, b)
            assert fuse_a_out_of_b([x] * b, a) == pytest.approx(0.9, abs=1e-12)


def test_per_su_target_with_errors_reduces_to_error_free():
    sensors = [0, 2, 3]
    x = per_su_target_with_errors(0.9, 2, sensors, ErrorModel.none(4))
    assert x == pytest.approx(per_su_target(0.9, 2, 3), abs=1e-10)


def test_per_su_target_with_errors_worst_receiver_meets_target():
    em = ErrorModel.uniform(4, 0.05)
    sensors = [0, 1, 3]
    x = per_su_target_with_errors(0.9, 2, sensors, em)
    fused = [fused_with_errors(r, [x] * 3, sensors, em, 2) for r in range(4)]
    assert min(fused) == pytest.approx(0.9, abs=1e-10)


def test_strict_rule_with_errors_can_be_infeasible():
    # AND over two reports: a receiver outside the set sees each busy bit
    # survive with probability 0.95 at best, so at most 0.9025 < 0.95
    with pytest.raises(InfeasibleTarget):
        per_su_target_with_errors(0.95, 2, [0, 1], ErrorModel.uniform(3, 0.05))


def test_link_probabilities_zero_outside_assignment():
    snr = np.full((3, 2), 0.05)
    mask = np.array([[1, 0], [1, 1], [0, 0]], bool)
    tau = np.where(mask, 1e-3, 0.0)
    pd, pf = link_probabilities(snr, mask, [2, 1], np.array([0.9, 0.9]), tau, F_S)
    assert np.all(pd[~mask] == 0) and np.all(pf[~mask] == 0)
    assert pd[0, 0] == pytest.approx(per_su_target(0.9, 2, 2))
    assert pd[1, 1] == pytest.approx(0.9)
    assert np.all(pf[mask] < pd[mask])
