import numpy as np
import pytest

from levyhjb.errors import BadWindow
from levyhjb.problem import make_problem
from levyhjb.sde import (
    Stopper, cost_compare, estimate_cost, increment_moment_probe, k2_constant, moment_bound_check, pathwise_compare,
    path_seed_sequence, run_batch, simulate, write_path_csv,
)


def frozen(cost=0.0, psi="zero"):
    return make_problem("uncontrolled_diffusion_1d",
                        {"sigma": 0.0, "running_cost": cost, "psi": psi, "lambda": 1.0})


def test_frozen_state_stays_put():
    rec = simulate(frozen(), np.array([0.0]), 0.0, [0.3], 0.01, stream=0)
    assert np.all(rec.states == 0.3)
    assert rec.exit_time_tau == 1.0
    assert np.all(np.diff(rec.times) > 0) and rec.times[0] == 0.0


def test_start_outside_exits_immediately():
    rec = simulate(frozen(), np.array([0.0]), 0.2, [1.5], 0.01, stream=0)
    assert rec.exit_time_tau == 0.2 and rec.exit_state[0] == 1.5


def test_constant_cost_is_exact():
    est = estimate_cost(frozen(cost=1.5), np.array([0.0]), 0.25, [0.0], 100, 0.01, 1)
    assert est.mean == pytest.approx(1.5 * 0.75, abs=1e-12) and est.std_error == 0.0


def test_unit_terminal_data_costs_one():
    spec = make_problem("uncontrolled_diffusion_1d", {}).with_(terminal=lambda t, X: np.ones(len(X)))
    est = estimate_cost(spec, np.array([0.0]), 0.0, [0.2], 200, 0.01, 2)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_symmetric_exit_mean():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    est = estimate_cost(spec, np.array([0.0]), 0.0, [0.0], 100_000, 1e-3, 3, workers=8)
    assert abs(est.mean) <= 3 * est.std_error


def test_optional_stopping_at_start_point():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    est = estimate_cost(spec, np.array([0.0]), 0.0, [0.3], 40_000, 1e-3, 4, workers=8)
    assert abs(est.mean - 0.3) <= 3 * est.std_error


def test_path_invariants():
    spec = make_problem("jump_diffusion_ball", {})
    for i in range(5):
        rec = simulate(spec, spec.controls.points[1], 0.0, [0.0, 0.0], 1e-3, stream=path_seed_sequence(9, i))
        assert np.all(np.diff(rec.times) > 0)
        assert rec.exit_time_tau <= spec.T
        before = rec.times < rec.exit_time_tau
        assert np.all(spec.domain.signed_distance(rec.states[before]) > 0)
        assert rec.exit_time_tau == spec.T or spec.domain.signed_distance(rec.exit_state) <= 0


def test_workers_do_not_change_results():
    spec = make_problem("jump_diffusion_ball", {})
    a = run_batch([spec], spec.controls.points[3], 0.0, [0.1, 0.0], 5000, 1e-2, 5, [Stopper(0, spec.domain)], workers=1)
    b = run_batch([spec], spec.controls.points[3], 0.0, [0.1, 0.0], 5000, 1e-2, 5, [Stopper(0, spec.domain)], workers=8)
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.x_tau, b.x_tau) and np.array_equal(a.cost, b.cost)


def test_path_csv_is_reproducible(tmp_path):
    spec = make_problem("jump_diffusion_ball", {})
    for name in ("a.csv", "b.csv"):
        write_path_csv(tmp_path / name, simulate(spec, spec.controls.points[0], 0.0, [0.0, 0.0], 1e-3,
                                                 stream=path_seed_sequence(1, 0)))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_zero_dynamics_increment_is_zero():
    out = increment_moment_probe(frozen(), np.array([0.0]), 0.0, [0.0], [(0.0, 0.5)], 100, 0.01, 0)
    assert out[0].empirical == 0.0 and out[0].passed


def test_brownian_window_against_bound():
    spec = make_problem("uncontrolled_diffusion_1d", {"halfwidth": 50.0})
    (chk,) = increment_moment_probe(spec, np.array([0.0]), 0.0, [0.0], [(0.3, 0.4)], 100_000, 1e-3, 6, workers=8)
    assert k2_constant(1.0, 1.0, 0.0) * 0.1 == pytest.approx(3 * 5 * 0.1)
    # E sup_{[0, 0.1]} |B|^2 lies between E|B_0.1|^2 = 0.1 and Doob's 4 * 0.1
    assert 0.1 < chk.empirical < 0.4 and chk.passed


def test_window_outside_horizon():
    with pytest.raises(BadWindow):
        increment_moment_probe(frozen(), np.array([0.0]), 0.0, [0.0], [(0.5, 1.5)], 10, 0.01, 0)


def test_ball_windows_and_sup_moment():
    spec = make_problem("jump_diffusion_ball", {})
    u = spec.controls.points[1]
    checks = increment_moment_probe(spec, u, 0.0, [0.0, 0.0], [(0.0, 0.1), (0.2, 0.5), (0.5, 1.0)], 4000, 1e-3, 7,
                                    workers=8)
    assert all(c.passed for c in checks)
    assert moment_bound_check(spec, u, 0.0, [0.0, 0.0], 4000, 1e-3, 8, workers=8).passed


def test_identical_specs_have_no_gap():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    chk = pathwise_compare(spec, spec, np.array([0.0]), 0.0, [0.0], 1000, 1e-2, 0)
    assert chk.empirical == 0.0 and chk.passed
    assert cost_compare(spec, spec, np.array([0.0]), 0.0, [0.0], 1000, 1e-2, 0).empirical == 0.0


def test_drift_shift_gronwall_hand_bound():
    spec = make_problem("controlled_drift_interval", {})
    shifted = spec.with_(drift=lambda t, X, U: U[:, :1] + 0.01, C=spec.C + 0.01)
    chk = pathwise_compare(spec, shifted, np.array([-1.0]), 0.0, [0.0], 4000, 1e-3, 11, workers=8)
    assert chk.passed
    # same noise and control: the gap is the deterministic drift integral
    assert chk.empirical <= (0.01 * spec.T * np.exp(spec.C * spec.T)) ** 2 + 4 * chk.std_error


def test_volatility_scaling_passes():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    other = make_problem("uncontrolled_diffusion_1d", {"sigma": 1.05, "C": 1.05})
    assert pathwise_compare(spec, other, np.array([0.0]), 0.0, [0.0], 4000, 1e-3, 12, workers=8).passed


def test_constant_cost_offset():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    other = make_problem("uncontrolled_diffusion_1d", {"running_cost": 0.02})
    chk = cost_compare(spec, other, np.array([0.0]), 0.0, [0.0], 1000, 1e-3, 13)
    assert chk.empirical == pytest.approx(0.02 * spec.T, rel=1e-9) and chk.passed
