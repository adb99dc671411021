import numpy as np
import pytest
from hypothesis import given, strategies as st

from levyhjb.errors import BadParams, UnknownFamily
from levyhjb.problem import FAMILIES, box_controls, finite_controls, make_problem, validate_assumptions


def test_registry_has_four_families():
    assert set(FAMILIES) == {"uncontrolled_diffusion_1d", "controlled_drift_interval", "jump_diffusion_ball",
                             "degenerate_interior"}


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_every_family_passes_its_assumptions(family):
    rep = validate_assumptions(make_problem(family, {}), n_samples=10_000, stream=0)
    assert rep.passed, rep.violations


def test_uncontrolled_constants():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    assert spec.C == 1.0 and spec.lam == 1.0
    rep = validate_assumptions(spec, stream=1)
    assert rep["drift-vol lipschitz"].worst == 0.0


def test_planted_drift_violation_is_named():
    spec = make_problem("uncontrolled_diffusion_1d", {})
    bad = spec.with_(drift=lambda t, X, U: np.full_like(X, 2 * spec.C))
    rep = validate_assumptions(bad, stream=2)
    assert not rep.passed
    assert "drift bound" in rep.violations


def test_ball_jump_bound_by_construction(rng):
    spec = make_problem("jump_diffusion_ball", {})
    x = rng.uniform(-1, 1, (1000, 2))
    g = spec.jump(0.0, x, np.zeros((1000, 2)), spec.levy.z[0])
    assert np.all(np.linalg.norm(g, axis=1) <= 0.1 * spec.levy.rho_z[0] + 1e-15)
    rep = validate_assumptions(spec, stream=3)
    assert rep["jump lipschitz"].margin > 0


def test_controlled_drift_is_the_control():
    spec = make_problem("controlled_drift_interval", {})
    X = np.zeros((2, 1))
    assert np.array_equal(spec.drift(0.0, X, np.array([[-1.0], [1.0]])), [[-1.0], [1.0]])


def test_unknown_family_and_params():
    with pytest.raises(UnknownFamily):
        make_problem("nope", {})
    with pytest.raises(BadParams):
        make_problem("uncontrolled_diffusion_1d", {"colour": 1})


def test_validation_does_not_mutate():
    spec = make_problem("jump_diffusion_ball", {})
    before = (spec.C, spec.lam, spec.levy.w.copy())
    validate_assumptions(spec, stream=4)
    assert (spec.C, spec.lam) == before[:2] and np.array_equal(spec.levy.w, before[2])


def test_finite_controls_distinct_and_metric():
    c = finite_controls([[0.0, 1.0], [1.0, 0.0]])
    assert len(c) == 2
    assert c.metric([0.0, 1.0], [0.0, 1.0]) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_metric_symmetric(a, b):
    c = box_controls([-5, -5], [5, 5])
    assert c.metric(a, b) == c.metric(b, a) >= 0


def test_box_enumeration_starts_at_center():
    c = box_controls([-1.0], [1.0])
    pts = c.enumerate(4)
    assert pts[0, 0] == 0.0
    assert len(np.unique(pts[:, 0])) == 4
