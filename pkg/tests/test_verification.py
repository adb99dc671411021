import json

import numpy as np
import pytest

from levyhjb.errors import BadStoppingRule, IncompatibleSpecs
from levyhjb.hjb import GridSpec, solve
from levyhjb.policy import synthesize
from levyhjb.problem import finite_controls, make_problem
from levyhjb.verification import (
    Budget, MonteCarlo, Quantity, control_projection_probe, coupling_probe, dpp_check, perturb_drift,
    representation_check,
)


@pytest.fixture(scope="module")
def frozen_setup():
    spec = make_problem("uncontrolled_diffusion_1d", {"sigma": 0.0, "running_cost": 1.0, "psi": "zero", "lambda": 1.0})
    spec = spec.with_(controls=finite_controls([-1.0, 0.0, 1.0]), drift=lambda t, X, U: np.zeros_like(X))
    fld = solve(spec, GridSpec(0.05, 20))
    return spec, fld, synthesize(fld, spec, 4, 0.05)


def test_quantity_rules():
    assert Quantity("a", -0.5, 1.0).passed and not Quantity("a", -1.5, 1.0).passed
    assert Quantity("a", -5.0, 1.0, "le").passed and not Quantity("a", 1.5, 1.0, "le").passed
    assert Quantity("a", 5.0, 1.0, "ge").passed and not Quantity("a", -1.5, 1.0, "ge").passed


def test_zero_coefficient_representation_is_exact(frozen_setup):
    spec, fld, pol = frozen_setup
    rep = representation_check(spec, fld, [("synthesized", pol)], 0.25, [0.2], MonteCarlo(100, 0.01, 1), Budget())
    assert rep.passed
    for c in rep.details["costs"].values():
        assert c["mean"] == pytest.approx(0.75, abs=1e-12) and c["std_error"] == 0.0
    assert rep.details["W"] == pytest.approx(0.75, abs=1e-12)


def test_zero_coefficient_dpp_telescopes(frozen_setup):
    spec, fld, pol = frozen_setup
    for theta in (("time", 0.5), ("exit", 0.2), None):
        rep = dpp_check(spec, fld, [("synthesized", pol)], 0.0, [0.2], theta, MonteCarlo(50, 0.01, 2), Budget())
        assert abs(rep["dpp residual"].value) <= 1e-12


def test_dpp_at_horizon_matches_representation():
    spec = make_problem("controlled_drift_interval", {})
    fld = solve(spec, GridSpec(0.05))
    pol = synthesize(fld, spec, 10, 0.05)
    mc = MonteCarlo(2000, 1e-3, 3, 4)
    rep = representation_check(spec, fld, [("synthesized", pol)], 0.0, [0.1], mc, Budget(0.05, 0.0))
    dpp = dpp_check(spec, fld, [("synthesized", pol)], 0.0, [0.1], "T", mc, Budget(0.05, 0.0))
    assert dpp["dpp residual"].value == rep["sandwich lower: min cost - W"].value
    costs = rep.details["costs"]
    assert costs["const +1"]["mean"] >= costs["synthesized"]["mean"] - 3 * costs["synthesized"]["std_error"]


def test_bad_stopping_rules(frozen_setup):
    spec, fld, pol = frozen_setup
    mc = MonteCarlo(10, 0.01, 0)
    for theta in (("time", 1.5), ("time", 0.0), ("exit", 5.0), ("sometime", 0.1)):
        with pytest.raises(BadStoppingRule):
            dpp_check(spec, fld, [("synthesized", pol)], 0.0, [0.0], theta, mc, Budget())


def test_reports_are_reproducible(tmp_path):
    spec = make_problem("controlled_drift_interval", {})
    fld = solve(spec, GridSpec(0.05))
    pol = synthesize(fld, spec, 10, 0.05)
    for name, workers in (("a.json", 1), ("b.json", 8)):
        rep = dpp_check(spec, fld, [("synthesized", pol)], 0.0, [0.0], ("time", 0.5), MonteCarlo(3000, 1e-3, 4, workers),
                        Budget(0.02, 0.0))
        rep.to_json(tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["name"] == "dpp"


def test_identical_specs_never_separate():
    spec = make_problem("jump_diffusion_ball", {})
    rep = coupling_probe(spec, spec, spec.controls.points[1], 0.1 * spec.domain.eta, 0.0, [0.0, 0.0],
                         MonteCarlo(2000, 1e-3, 5, 8))
    assert rep.details["p_hat"] == 0.0 and rep.passed


def test_coupling_rejects_mismatched_dimensions():
    a = make_problem("jump_diffusion_ball", {})
    b = make_problem("controlled_drift_interval", {})
    with pytest.raises(IncompatibleSpecs):
        coupling_probe(a, b, np.zeros(2), 0.1, 0.0, [0.0, 0.0], MonteCarlo(10, 0.01, 0))


def test_small_drift_perturbation_rarely_separates():
    spec = make_problem("controlled_drift_interval", {})
    rep = coupling_probe(spec, perturb_drift(spec, 1e-3), np.array([-1.0]), 0.1 * spec.domain.eta, 0.0, [0.0],
                         MonteCarlo(5000, 1e-3, 6, 8))
    assert rep.details["p_hat"] <= 0.01 and rep.passed


def _box_spec():
    return make_problem("controlled_drift_interval", {"controls": {"kind": "box", "low": [-1], "high": [1]},
                                                      "halfwidth": 50.0})


def test_projection_of_an_enumerated_control_is_exact():
    spec = _box_spec()
    u0 = spec.controls.enumerate(2)[1]
    rep = control_projection_probe(spec, u0, [2, 4, 8], MonteCarlo(500, 1e-2, 7))
    assert all(v == 0.0 for v in rep.details.values()) and rep.passed


def test_sinusoidal_control_projection_shrinks():
    spec = _box_spec()
    control = lambda s, X: np.full((len(X), 1), np.sin(2 * np.pi * s))
    rep = control_projection_probe(spec, control, [2, 8, 32], MonteCarlo(500, 1e-3, 8, 8), tolerance=1e-2)
    devs = [rep.details[f"n={n}"] for n in (2, 8, 32)]
    assert devs[0] > devs[1] > devs[2]
    assert rep.passed


def test_constant_control_projection_non_increasing():
    spec = _box_spec()
    rep = control_projection_probe(spec, np.array([0.37]), [1, 2, 4, 16], MonteCarlo(200, 1e-2, 9), tolerance=1.0)
    assert rep["largest increase along the schedule"].passed
