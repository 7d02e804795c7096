import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogmac.model import (ConfigError, ErrorModel, ScenarioConfig, SensingAccessParams, SensingAssignment,
                          TimingParams, dual_view, invert_sets)

# sensing sets of the 5 SU x 5 channel example (0-based)
EXAMPLE_PER_SU = [{0, 2, 3}, {0, 1}, {1, 2, 3}, set(), {0, 4}]


def test_example_assignment_dual_view():
    asg = dual_view(EXAMPLE_PER_SU, 5, 5)
    assert asg.per_channel[0] == {0, 1, 4}
    assert asg.per_channel[4] == {4}
    assert list(asg.b) == [3, 2, 2, 2, 1]
    assert asg.to_dict()["per_channel"]["1"] == [1, 2, 5]
    assert asg.grid()[3] == ". . . . ."


def test_trivial_dual_views():
    empty = dual_view([set()] * 3, 2, 3)
    assert empty.per_channel == (frozenset(), frozenset())
    full = SensingAssignment.full(2, 3)
    assert all(s == {0, 1, 2} for s in full.per_channel)


def test_dual_view_rejects_bad_index():
    with pytest.raises(ConfigError):
        dual_view([{5}], 2, 1)
    with pytest.raises(ConfigError):
        dual_view([{0}], 2, 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_dual_view_is_an_involution(M, N, data):
    mat = np.array(data.draw(st.lists(st.booleans(), min_size=M * N, max_size=M * N))).reshape(N, M)
    asg = SensingAssignment.from_matrix(mat)
    assert np.array_equal(asg.matrix, mat)
    assert invert_sets(asg.per_channel, N) == asg.per_su
    assert SensingAssignment.from_pattern(asg.pattern(), M, N) == asg


def test_inconsistent_views_rejected():
    with pytest.raises(ConfigError):
        SensingAssignment((frozenset({0}),), (frozenset(),))


def test_scenario_defaults_and_linear_snr():
    sc = ScenarioConfig(M=4, N=4, p_idle=0.5, snr=10 ** (-1.5))
    assert sc.p_idle.shape == (4,) and np.all(sc.pd_target == 0.9)
    assert np.allclose(sc.snr_db, -15.0)
    assert sc.reporting_time == pytest.approx(4 * 80e-6)
    with pytest.raises(ValueError):
        sc.snr[0, 0] = 1.0  # read-only


def test_ten_su_reporting_fits_the_cycle():
    sc = ScenarioConfig(M=4, N=10, p_idle=1.0, snr=0.1)
    assert sc.reporting_time == pytest.approx(0.8e-3)


def test_scenario_collects_every_problem():
    with pytest.raises(ConfigError) as err:
        ScenarioConfig(M=3, N=2, p_idle=[0.5, 0.5, 1.3], snr=np.array([[0.1, -1, 0.1], [0.1, 0.1, 0.1]]),
                       pd_target=1.0, f_s=-1)
    names = [f for f, _ in err.value.fields]
    assert "p_idle[2]" in names and "snr[0][1]" in names and "f_s" in names and "pd_target[0]" in names


@pytest.mark.parametrize("M,N", [(0, 1), (1, 0)])
def test_scenario_needs_channels_and_sus(M, N):
    with pytest.raises(ConfigError):
        ScenarioConfig(M=M, N=N, p_idle=0.5, snr=0.1)


def test_timing_invariants():
    with pytest.raises(ConfigError):
        ScenarioConfig(M=1, N=2, p_idle=0.5, snr=0.1, timing=TimingParams(T=1e-4))
    with pytest.raises(ConfigError):
        ScenarioConfig(M=1, N=1, p_idle=0.5, snr=0.1, timing=TimingParams(PD=30e-6))


def test_snr_shift_is_in_db():
    sc = ScenarioConfig(M=1, N=1, p_idle=0.5, snr=10 ** (-1.5))
    assert sc.with_snr_shift(-7).snr_db[0, 0] == pytest.approx(-22.0)


def test_params_check():
    asg = dual_view([{0}, {0, 1}], 2, 2)
    ok = SensingAccessParams(np.array([[1e-3, 0], [1e-3, 2e-3]]), np.array([2, 1]), 0.1)
    ok.check(asg, 0.1)
    assert ok.tau_max == pytest.approx(3e-3)
    bad = SensingAccessParams(np.array([[0.0, 1e-3], [1e-3, 2e-3]]), np.array([3, 1]), 1.2)
    with pytest.raises(ConfigError) as err:
        bad.check(asg, 0.1)
    names = {f for f, _ in err.value.fields}
    assert {"params.tau[0][0]", "params.tau[0][1]", "params.a[0]", "params.p"} <= names


def test_error_model_validation():
    em = ErrorModel.uniform(3, 0.05)
    assert np.all(np.diag(em.pe) == 0) and em.N == 3 and not em.is_zero
    assert ErrorModel.none(2).is_zero
    with pytest.raises(ConfigError):
        ErrorModel(np.array([[0.1, 0.0], [0.0, 0.0]]))
    with pytest.raises(ConfigError):
        ErrorModel(np.array([[0.0, 1.5], [0.0, 0.0]]))
