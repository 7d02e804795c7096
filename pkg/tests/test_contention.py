import math

import numpy as np
import pytest

from cogmac.contention import (FLOOR_EPS, average_contention_time, conditional_channel_throughput,
                               efficiency_table, frame_durations, packet_table, packet_unit,
                               relaxed_channel_throughput, slot_probabilities)
from cogmac.model import TimingParams

TIMING = TimingParams()
FRAMES = frame_durations(TIMING)


def test_frame_durations_from_default_timing():
    assert FRAMES.t_success == pytest.approx(474.1)
    assert FRAMES.t_rtscts == pytest.approx(50.1)
    assert FRAMES.t_collision == pytest.approx(30.05)


def test_slot_probabilities_small_cases():
    assert slot_probabilities(1, 0.3) == pytest.approx((0.3, 0.7, 0.0))
    assert slot_probabilities(2, 0.5) == pytest.approx((0.5, 0.25, 0.25))
    with pytest.raises(ValueError):
        slot_probabilities(0, 0.5)


def test_slot_probabilities_sum_to_one_on_grid():
    n = np.arange(1, 51)[:, None]
    p = np.linspace(0.0, 1.0, 41)[None, :]
    s, i, c = slot_probabilities(n, p)
    assert np.allclose(s + i + c, 1.0, atol=1e-12)
    assert np.all(c >= 0)


def test_slot_probabilities_against_bernoulli_trials():
    rng = np.random.default_rng(11)
    n, p, trials = 5, 0.1, 1_000_000
    k = rng.binomial(n, p, size=trials)
    emp = np.array([(k == 1).mean(), (k == 0).mean(), (k >= 2).mean()])
    ref = np.array(slot_probabilities(n, p))
    sigma = np.sqrt(ref * (1 - ref) / trials)
    assert np.all(np.abs(emp - ref) <= 3 * sigma + 1e-12)


def test_contention_time_single_contender():
    # no collisions, geometric idle run with mean (1-p)/p
    assert average_contention_time(1, 0.5, FRAMES) == pytest.approx(1.0 + 50.1)
    assert average_contention_time(1, 0.25, FRAMES) == pytest.approx(3.0 + 50.1)


def test_contention_time_two_contenders_closed_form():
    # N_c = 0.75 / 0.5 - 1 = 0.5, T_I = 0.25 / 0.75
    expected = 0.5 * 30.05 + (1 / 3) * 1.5 + 50.1
    assert average_contention_time(2, 0.5, FRAMES) == pytest.approx(expected, rel=1e-12)


def _slot_level_epochs(n, p, epochs, rng):
    """Play contention slot by slot until exactly one SU transmits."""
    time = np.zeros(epochs)
    alive = np.arange(epochs)
    while alive.size:
        k = rng.binomial(n, p, size=alive.size)
        time[alive] += np.where(k == 0, 1.0, np.where(k >= 2, FRAMES.t_collision, FRAMES.t_rtscts))
        alive = alive[k != 1]
    return time


@pytest.mark.parametrize("n,p", [(2, 0.5), (4, 0.1), (8, 0.05)])
def test_contention_time_against_slot_simulation(n, p):
    rng = np.random.default_rng(n)
    t = _slot_level_epochs(n, p, 400_000, rng)
    assert average_contention_time(n, p, FRAMES) == pytest.approx(t.mean(), rel=0.01)


def test_contention_time_blows_up_for_tiny_p():
    vals = average_contention_time(10, np.array([1e-2, 1e-3, 1e-4]), FRAMES)
    assert np.all(np.diff(vals) > 0) and vals[-1] > 1e3


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_contention_time_rejects_degenerate_p(p):
    with pytest.raises(ValueError):
        average_contention_time(2, p, FRAMES)


def test_conditional_throughput_reference_point():
    # n = 1, p = 0.1026, tau = 5.4 ms, T_R = 10 * 80 us
    tau, t_r, p = 5.4e-3, 0.8e-3, 0.1026
    slots = (0.1 - tau - t_r) / 20e-6
    cycle = (1 - p) / p + 50.1 + 474.1
    expected = math.floor(slots / cycle) * 474.1 * 20e-6 / 0.1
    assert expected == pytest.approx(8 * 474.1 * 20e-6 / 0.1)  # 4690 slots / 532.95 -> 8 packets
    assert conditional_channel_throughput(1, p, TIMING, FRAMES, tau, t_r) == pytest.approx(expected, rel=1e-12)


def test_conditional_throughput_zero_without_room():
    assert conditional_channel_throughput(1, 0.5, TIMING, FRAMES, 0.1 - 0.8e-3, 0.8e-3) == 0.0
    # less than one packet worth of data time left
    tau = 0.1 - 0.8e-3 - 500 * 20e-6
    assert conditional_channel_throughput(1, 0.5, TIMING, FRAMES, tau, 0.8e-3) == 0.0
    with pytest.raises(ValueError):
        conditional_channel_throughput(1, 0.5, TIMING, FRAMES, 0.1, 0.8e-3)


def test_floor_never_exceeds_relaxation_and_loses_under_one_packet():
    unit = packet_unit(TIMING)
    for n in (1, 2, 5):
        for tau in (1e-4, 3e-3, 2e-2):
            for p in (0.02, 0.1, 0.3):
                exact = conditional_channel_throughput(n, p, TIMING, FRAMES, tau, 0.8e-3)
                relaxed = relaxed_channel_throughput(n, p, TIMING, FRAMES, tau, 0.8e-3)
                assert exact <= relaxed + 1e-15
                assert relaxed - exact < unit


def test_throughput_monotone_in_tau_and_n():
    taus = np.linspace(1e-4, 5e-2, 60)
    vals = [conditional_channel_throughput(3, 0.1, TIMING, FRAMES, t, 0.8e-3) for t in taus]
    assert np.all(np.diff(vals) <= 1e-15)
    # with moderate p more contenders only add collisions (at very small p
    # a second contender first shortens the idle runs)
    by_n = [conditional_channel_throughput(n, 0.3, TIMING, FRAMES, 2e-3, 0.8e-3) for n in range(1, 11)]
    assert np.all(np.diff(by_n) <= 1e-15)


def test_tables_agree_with_scalar_functions():
    p = np.array([0.05, 0.2])
    table = packet_table(4, p, TIMING, FRAMES, 2e-3, 0.8e-3)
    eff = efficiency_table(4, p, FRAMES)
    assert np.all(table[0] == 0) and np.all(eff[0] == 0)
    for n in range(1, 5):
        for k, pk in enumerate(p):
            assert table[n, k] == conditional_channel_throughput(n, pk, TIMING, FRAMES, 2e-3, 0.8e-3)
            frac = 1 - (2e-3 + 0.8e-3) / 0.1
            assert frac * eff[n, k] == pytest.approx(
                relaxed_channel_throughput(n, pk, TIMING, FRAMES, 2e-3, 0.8e-3), rel=1e-12)


def test_floor_guard_is_tiny():
    assert 0 < FLOOR_EPS < 1e-6
