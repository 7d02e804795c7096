import numpy as np
import pytest

from cogmac.model import ConfigError, ErrorModel, ScenarioConfig, SensingAccessParams, SensingAssignment, dual_view
from cogmac.optimize import (OptimizerSettings, equalize_detection, line_search_tau, optimize_params,
                             rule_thresholds)
from cogmac.sensing import InfeasibleTarget, fuse_a_out_of_b
from cogmac.throughput_exact import fused_channel_probabilities, normalized_throughput_ne

SMALL = ScenarioConfig(M=2, N=2, p_idle=[0.8, 0.6], snr=10 ** (np.array([[-15.0, -20.0], [-20.0, -12.0]]) / 10))


def test_single_sensor_keeps_the_channel_target():
    asg = dual_view([{0}, {1}], 2, 2)
    eq = equalize_detection(SMALL, asg, [1, 1])
    assert eq.pd[0, 0] == pytest.approx(0.9) and eq.pd[1, 1] == pytest.approx(0.9)
    assert eq.pd[0, 1] == 0.0


def test_or_rule_closed_form():
    sc = ScenarioConfig(M=1, N=2, p_idle=0.5, snr=0.05, pd_target=0.99)
    eq = equalize_detection(sc, SensingAssignment.full(1, 2), [1])
    assert eq.pd[:, 0] == pytest.approx([0.9, 0.9], abs=1e-10)


def test_two_of_three_round_trip():
    sc = ScenarioConfig(M=1, N=3, p_idle=0.5, snr=0.05)
    eq = equalize_detection(sc, SensingAssignment.full(1, 3), [2])
    assert fuse_a_out_of_b(eq.pd[:, 0], 2) == pytest.approx(0.9, abs=1e-8)
    assert eq.fused_pd[0] == pytest.approx(0.9, abs=1e-8)


def test_unreachable_target_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(M=1, N=1, p_idle=0.5, snr=0.05, pd_target=1.0)
    # two-sensor AND with 5% flips tops out at 0.95^2 at the third SU
    sc = ScenarioConfig(M=1, N=3, p_idle=0.5, snr=0.05, pd_target=0.95)
    with pytest.raises(InfeasibleTarget):
        equalize_detection(sc, dual_view([{0}, {0}, set()], 1, 3), [2], ErrorModel.uniform(3, 0.05))


def test_line_search_matches_grid():
    f = lambda t: -(t - 0.0123) ** 2 + 0.3 * np.sin(40 * t) * 1e-4
    grid = np.linspace(1e-4, 0.05, 1000)
    best = grid[np.argmax([f(t) for t in grid])]
    x, v = line_search_tau(f, 1e-4, 0.05, tol=1e-7)
    assert x == pytest.approx(best, abs=0.05 / 999)
    assert v >= max(f(1e-4), f(0.05))


def test_line_search_constant_objective_gives_midpoint():
    x, v = line_search_tau(lambda t: 1.0, 0.0, 2.0)
    assert x == pytest.approx(1.0, abs=1e-6) and v == 1.0


def test_line_search_rejects_bad_bracket():
    with pytest.raises(ValueError):
        line_search_tau(lambda t: t, 1.0, 0.5)


def test_single_link_beats_grid_search():
    sc = ScenarioConfig(M=1, N=1, p_idle=0.7, snr=10 ** -1.5)
    asg = SensingAssignment.full(1, 1)
    params, rep = optimize_params(sc, asg)
    best = 0.0
    for tau in np.linspace(1 / sc.f_s, 0.02, 300):
        for p in np.linspace(0.01, 0.5, 50):
            nt = normalized_throughput_ne(sc, SensingAccessParams(np.full((1, 1), tau), np.array([1]), p), asg).nt
            best = max(best, nt)
    assert rep.nt >= best * (1 - 0.005)
    # the interior optimum: more sensing than one sample, far less than the cycle
    assert 1 / sc.f_s < params.tau[0, 0] < 0.02


def test_result_is_consistent_and_meets_targets():
    asg = dual_view([{0, 1}, {1}], 2, 2)
    params, rep = optimize_params(SMALL, asg)
    params.check(asg, SMALL.timing.T)
    assert rep.nt == pytest.approx(normalized_throughput_ne(SMALL, params, asg).nt, abs=1e-12)
    pd, _ = fused_channel_probabilities(SMALL, params, asg)
    assert pd == pytest.approx(SMALL.pd_target, abs=1e-8)
    nts = [nt for _, nt in rep.trace]
    assert np.all(np.diff(nts) >= -1e-12)


def test_single_sensors_use_threshold_one():
    params, _ = optimize_params(SMALL, dual_view([{0}, {1}], 2, 2))
    assert list(params.a) == [1, 1]


def test_beats_random_feasible_draws():
    asg = SensingAssignment.full(2, 2)
    _, rep = optimize_params(SMALL, asg)
    rng = np.random.default_rng(4)
    for _ in range(100):
        tau = rng.uniform(1 / SMALL.f_s, 0.01, (2, 2))
        params = SensingAccessParams(tau, rng.integers(1, 3, 2), float(rng.uniform(1e-3, 0.5)))
        assert rep.nt >= normalized_throughput_ne(SMALL, params, asg).nt - 1e-12


@pytest.mark.parametrize("rule", ["or", "and", "majority"])
def test_fixed_rules_never_beat_the_free_rule(rule):
    sc = ScenarioConfig(M=1, N=3, p_idle=0.9, snr=10 ** (np.array([[-14.0], [-18.0], [-21.0]]) / 10))
    asg = SensingAssignment.full(1, 3)
    free, rep_free = optimize_params(sc, asg)
    fixed, rep_fixed = optimize_params(sc, asg, OptimizerSettings(fusion_rule=rule))
    assert tuple(fixed.a) == rule_thresholds(rule, [3])
    assert rep_fixed.nt <= rep_free.nt + 1e-12


def test_rule_thresholds():
    assert rule_thresholds("or", [3, 0, 2]) == (1, 0, 1)
    assert rule_thresholds("and", [3, 0, 2]) == (3, 0, 2)
    assert rule_thresholds("majority", [3, 4, 1]) == (2, 2, 1)


def test_empty_assignment_earns_nothing():
    _, rep = optimize_params(SMALL, dual_view([set(), set()], 2, 2))
    assert rep.nt == 0.0


def test_settings_validation():
    with pytest.raises(ConfigError):
        OptimizerSettings(p_grid_step=0.7)
    with pytest.raises(ConfigError):
        OptimizerSettings(max_rounds=0)
    with pytest.raises(ConfigError):
        OptimizerSettings(fusion_rule="xor")
    grid = OptimizerSettings().p_grid()
    assert grid[0] == pytest.approx(1e-4) and grid[-1] == pytest.approx(0.5)
