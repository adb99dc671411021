import numpy as np
import pytest

from levyhjb.errors import IncompatibleGrids
from levyhjb.hjb import GridSpec, solve
from levyhjb.policy import (
    evaluate_policy, export_policy_csv, finite_subset, import_policy_csv, project_control, project_controls,
    synthesize,
)
from levyhjb.problem import box_controls, finite_controls, make_problem


def test_finite_subset_examples():
    assert np.array_equal(finite_subset(finite_controls([2.0, 3.0]), 1).points, [[2.0]])
    assert np.array_equal(finite_subset(box_controls([-1.0], [1.0]), 1).points, [[0.0]])
    assert len(finite_subset(finite_controls([2.0, 3.0]), 5)) == 2


def test_projection_examples():
    sub = finite_controls([0.0, 1.0])
    assert project_control(1.0, sub)[0] == 1.0
    assert project_control(0.4, sub)[0] == 0.0
    assert project_control(0.5, sub)[0] == 0.0  # tie goes to the first point


def test_projection_is_idempotent(rng):
    sub = finite_subset(box_controls([-1.0, -1.0], [1.0, 1.0]), 9)
    u = rng.uniform(-1, 1, (200, 2))
    p = project_controls(u, sub)
    assert np.array_equal(project_controls(p, sub), p)


@pytest.fixture(scope="module")
def drift_setup():
    spec = make_problem("controlled_drift_interval", {})
    fld = solve(spec, GridSpec(0.02))
    return spec, fld


def test_synthesized_policy_pushes_left(drift_setup):
    spec, fld = drift_setup
    pol = synthesize(fld, spec, 50, 0.05)
    assert np.all(pol.table == -1.0)


def test_singleton_control_fills_table():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    pol = synthesize(solve(spec, GridSpec(0.05)), spec, 5, 0.1)
    assert np.all(pol.table == 0.0)


def test_cheapest_control_under_absolute_cost():
    spec = make_problem("uncontrolled_diffusion_1d", {"sigma": 0.0, "psi": "zero", "lambda": 1.0})
    spec = spec.with_(controls=finite_controls([-1.0, 0.0, 1.0]), running_cost=lambda t, X, U: np.abs(U[:, 0]))
    pol = synthesize(solve(spec, GridSpec(0.05, 10)), spec, 4, 0.1)
    assert np.all(pol.table == 0.0)


def test_lookup_rules(drift_setup):
    spec, fld = drift_setup
    pol = synthesize(fld, spec, 4, 0.5)
    pol.table[:] = np.arange(4 * pol.n_cells, dtype=float).reshape(4, pol.n_cells, 1)
    x3 = pol.cell_centers()[3]
    assert evaluate_policy(pol, 0.1, x3)[0] == pol.table[0, 3, 0]
    assert evaluate_policy(pol, spec.T, x3)[0] == pol.table[-1, 3, 0]
    assert evaluate_policy(pol, 0.25, x3)[0] == pol.table[0, 3, 0]  # right-closed slabs
    assert np.array_equal(evaluate_policy(pol, 0.1, [5.0]), pol.fallback)


def test_cells_partition_the_closure(drift_setup, rng):
    spec, fld = drift_setup
    pol = synthesize(fld, spec, 2, 0.05)
    x = rng.uniform(-1, 1, (1000, 1))
    x[:2, 0] = [-1.0, 1.0]
    k = pol.cell_index(x)
    assert np.all(k >= 0)
    lo = pol.cell_origin + pol.cell_h * k[:, None]
    assert np.all((x >= lo - 1e-12) & (x <= lo + pol.cell_h + 1e-12))


def test_policy_needs_a_fine_enough_field(drift_setup):
    spec, fld = drift_setup
    with pytest.raises(IncompatibleGrids):
        synthesize(fld, spec, 5, 0.01)


def test_policy_csv_round_trip(drift_setup, tmp_path):
    spec, fld = drift_setup
    pol = synthesize(fld, spec, 7, 0.05)
    export_policy_csv(tmp_path / "p.csv", pol)
    back = import_policy_csv(tmp_path / "p.csv")
    assert np.array_equal(back.table, pol.table)
    assert np.allclose(back.time_knots, pol.time_knots, atol=0, rtol=1e-15)
    assert back.cell_shape == pol.cell_shape and back.cell_h == pol.cell_h
