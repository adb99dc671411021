import numpy as np
import pytest
from hypothesis import given, strategies as st

from levyhjb.errors import CflViolation, EmptyControlSet, NonMonotoneDiffusion, OutsideDomain
from levyhjb.hjb import (
    GridSpec, apply_generator, cascade_study, evaluate, export_field_csv, field_from_function, generator_parts,
    import_field_csv, compare_field_tables, nonlocal_term, residual, solve,
)
from levyhjb.levy import build_discrete_measure
from levyhjb.problem import box_controls, finite_controls, make_problem


def frozen(cost=0.0, psi="quadratic"):
    return make_problem("uncontrolled_diffusion_1d", {"sigma": 0.0, "running_cost": cost, "psi": psi, "lambda": 1.0})


@pytest.fixture(scope="module")
def martingale_field():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    return spec, solve(spec, GridSpec(0.02))


def test_pure_transport_keeps_terminal_data():
    spec = frozen()
    fld = solve(spec, GridSpec(0.05, 10))
    x = fld.nodes[:, 0]
    assert np.array_equal(fld.values, np.broadcast_to(x**2, fld.values.shape))


def test_constant_running_cost_accumulates():
    spec = frozen(cost=0.7)
    fld = solve(spec, GridSpec(0.05, 10))
    x = fld.nodes[fld.interior, 0]
    expect = x[None, :] ** 2 + 0.7 * (spec.T - fld.times[:, None])
    assert np.allclose(fld.values[:, fld.interior], expect, atol=1e-12, rtol=0)


def test_martingale_value(martingale_field):
    spec, fld = martingale_field
    x = fld.nodes[:, 0]
    inside = spec.domain.signed_distance(fld.nodes) >= 0
    assert np.max(np.abs(fld.values[0, inside] - x[inside])) <= 2e-2


def test_terminal_level_is_exact(martingale_field):
    spec, fld = martingale_field
    assert np.array_equal(fld.values[-1], spec.terminal(np.full(fld.nodes.shape[0], spec.T), fld.nodes))


def test_maximum_principle_bound():
    spec = make_problem("controlled_drift_interval", {"running_cost": 0.3, "psi": "cosine"})
    fld = solve(spec, GridSpec(0.02))
    assert np.max(np.abs(fld.values)) <= 1.0 + spec.T * 0.3 + 1e-9


def test_cfl_violation_names_the_bound():
    with pytest.raises(CflViolation, match="time_steps >="):
        solve(make_problem("uncontrolled_diffusion_1d", {}), GridSpec(0.02, 100))


def test_box_controls_need_a_finite_subset():
    spec = make_problem("controlled_drift_interval", {"controls": {"kind": "box", "low": [-1], "high": [1]}})
    with pytest.raises(EmptyControlSet):
        solve(spec, GridSpec(0.05))


def test_non_dominant_diffusion_is_rejected():
    spec = make_problem("jump_diffusion_ball", {})
    spec = spec.with_(vol=lambda t, X, U: np.broadcast_to(np.array([[0.5, 0.5], [0.0, 0.1]]), (len(X), 2, 2)).copy())
    with pytest.raises(NonMonotoneDiffusion):
        solve(spec, GridSpec(0.1))


def test_evaluate_rules(martingale_field):
    spec, fld = martingale_field
    assert evaluate(fld, 0.3, [5.0]) == 5.0
    k = fld.lattice.shape[0] // 2
    node = fld.nodes[k]
    assert evaluate(fld, fld.times[7], node) == fld.values[7, k]
    mid = 0.5 * (fld.nodes[k] + fld.nodes[k + 1])
    assert evaluate(fld, fld.times[7], mid) == pytest.approx(0.5 * (fld.values[7, k] + fld.values[7, k + 1]), abs=1e-15)
    assert evaluate(fld, spec.T, [0.123]) == 0.123


def test_residual_vanishes_on_solutions(martingale_field):
    spec, fld = martingale_field
    for level in (0, 100, fld.n_levels - 2):
        for node in fld.interior_index[::7]:
            assert residual(fld, spec, level, node) <= 1e-10


def test_residual_detects_a_planted_defect():
    spec = make_problem("controlled_drift_interval", {})
    fld = solve(spec, GridSpec(0.05))
    i = fld.interior_index[10]
    fld.values[6, i] += 1.0
    assert residual(fld, spec, 5, i + 1) > 0
    with pytest.raises(OutsideDomain):
        residual(fld, spec, fld.n_levels - 1, i)


def test_generator_on_simple_functions():
    spec = make_problem("controlled_drift_interval", {"sigma": 0.0, "lambda": 1.0})
    grid = GridSpec(0.05, 4)
    const = field_from_function(spec, grid, lambda t, x: np.full(len(x), 3.0))
    lin = field_from_function(spec, grid, lambda t, x: x[:, 0].copy())
    node = const.interior_index[5]
    for u in (-1.0, 1.0):
        assert apply_generator(const, spec, 0, node, np.array([u])) == 0.0
        assert apply_generator(lin, spec, 0, node, np.array([u])) == pytest.approx(u, abs=1e-12)


def _atom_spec(d, gammas, weights, h):
    """Zero drift and volatility, constant jumps gamma_j landing on lattice nodes."""
    base = make_problem("jump_diffusion_ball", {}) if d == 2 else frozen()
    levy = build_discrete_measure([(np.eye(len(gammas))[j] if d == 2 else [float(j + 1)], w)
                                   for j, w in enumerate(weights)], jump_dim=len(gammas) if d == 2 else 1)
    G = np.array(gammas, dtype=float)

    def jump(t, X, U, z):
        j = int(np.argmax(np.abs(z))) if d == 2 else int(round(z[0])) - 1
        return np.broadcast_to(G[j], (len(X), d)).copy()

    return base.with_(levy=levy, jump=jump, drift=lambda t, X, U: np.zeros((len(X), d)),
                      vol=lambda t, X, U: np.zeros((len(X), d, base.m1)), m2=levy.jump_dim, C=10.0,
                      terminal=lambda t, X: np.sum(X**2, axis=1))


@pytest.mark.parametrize("d,gammas,weights", [
    (1, [[0.1]], [2.0]),
    (1, [[0.1], [-0.15]], [1.0, 3.0]),
    (2, [[0.1, 0.0], [0.05, -0.1]], [2.0, 0.5]),
])
def test_nonlocal_term_is_exact_on_quadratics(d, gammas, weights):
    h = 0.05
    spec = _atom_spec(d, gammas, weights, h)
    fld = field_from_function(spec, GridSpec(h, 2), lambda t, x: np.sum(x**2, axis=1))
    expect = sum(w * float(np.sum(np.square(g))) for g, w in zip(gammas, weights))
    checked = 0
    for node in fld.interior_index[:: max(1, len(fld.interior_index) // 25)]:
        x = fld.nodes[node]
        if np.all([spec.domain.signed_distance(x + np.array(g)) > 0 for g in gammas]):
            u = spec.controls.points[0]
            assert nonlocal_term(fld, spec, 0, node, u) == pytest.approx(expect, abs=1e-12)
            checked += 1
    assert checked >= 10


def test_upwind_part_differs_only_by_first_order_term():
    spec = _atom_spec(1, [[0.1]], [2.0], 0.05)
    fld = field_from_function(spec, GridSpec(0.05, 2), lambda t, x: np.sum(x**2, axis=1))
    node = fld.interior_index[len(fld.interior_index) // 2 + 3]
    parts = generator_parts(fld, spec, 0, node, spec.controls.points[0])
    # upwinding the compensator shifts the gradient by h/2 * W'' = h
    assert abs(parts["nonlocal"] - parts["nonlocal_central"]) == pytest.approx(2.0 * 0.1 * 0.05, abs=1e-12)


@given(st.floats(-1.0, 1.0), st.floats(0.0, 0.5))
def test_scheme_is_monotone_in_terminal_data(shift, bump):
    spec = make_problem("controlled_drift_interval", {"psi": "cosine"})
    lower = solve(spec, GridSpec(0.1))
    raised = spec.with_(terminal=lambda t, X: np.cos(np.pi * X[:, 0] / 2) + bump * np.exp(-((X[:, 0] - shift) ** 2)))
    upper = solve(raised, GridSpec(0.1, lower.n_levels - 1))
    assert np.all(upper.values >= lower.values - 1e-14)


def test_constant_shift_commutes():
    spec = make_problem("jump_diffusion_ball", {})
    a = solve(spec, GridSpec(0.1))
    b = solve(spec.with_(terminal=lambda t, X: X[:, 0] + 0.1), GridSpec(0.1, a.n_levels - 1))
    gap = b.values - a.values
    assert np.all(np.abs(gap - 0.1) <= 1e-12)


def test_eps_cascade_decreases():
    spec = make_problem("uncontrolled_diffusion_1d", {"psi": "quadratic"})
    tab = cascade_study(spec, GridSpec(0.02), [(0.1, 1, 0.0), (0.05, 1, 0.0), (0.025, 1, 0.0)])
    d = [r.diff_to_finest for r in tab.rows]
    assert d[0] > d[1] > 0 and tab.passed


def test_duplicated_controls_add_nothing():
    spec = make_problem("controlled_drift_interval", {})
    spec = spec.with_(controls=finite_controls([-1.0, 1.0, -1.0, 1.0]))
    tab = cascade_study(spec, GridSpec(0.05), [(0.0, 1, 0.0), (0.0, 2, 0.0), (0.0, 4, 0.0)])
    assert tab.rows[2].successive == 0.0


def test_box_subsets_cascade():
    spec = make_problem("controlled_drift_interval", {"controls": {"kind": "box", "low": [-1], "high": [1]}})
    tab = cascade_study(spec, GridSpec(0.05), [(0.0, 1, 0.0), (0.0, 2, 0.0), (0.0, 4, 0.0)])
    assert tab.passed


def test_delta_cascade_decreases():
    spec = make_problem("controlled_drift_interval", {})
    eta = spec.domain.eta
    tab = cascade_study(spec, GridSpec(0.01), [(0.0, 2, f * eta) for f in (0.2, 0.1, 0.05)])
    assert tab.rows[1].successive > tab.rows[2].successive > 0 and tab.passed


def test_field_csv_round_trip(martingale_field, tmp_path):
    spec, fld = martingale_field
    export_field_csv(tmp_path / "a.csv", fld, levels=[0, 10])
    export_field_csv(tmp_path / "b.csv", fld, levels=[0, 10])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    tab = import_field_csv(tmp_path / "a.csv")
    assert np.array_equal(tab["W"][: fld.lattice.size], fld.values[0])
    assert compare_field_tables(tab, tab) == 0.0
