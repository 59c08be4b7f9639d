import json

import numpy as np
import pytest

from modalflow.analysis import (error_bound_rhs, exact_modal_bound_check, reference_trajectory,
                                relative_error, rollout, theorem_bound_check)
from modalflow.basis import FieldSample
from modalflow.initial_conditions import half_exp_sin, quartic
from modalflow.resnet import ResNet
from modalflow.solvers import BlowUpError, PdeSpec, advect_exact, propagator_matrix
from modalflow.trajectory import Trajectory

ADV = PdeSpec("advection1d", 1.0, 0.0)
DIFF = PdeSpec("diffusion1d", 0.0, 0.5)


class LinearModel:
    """Stand-in for a perfectly trained network: forward is an exact matrix."""

    def __init__(self, a):
        self.a = a
        self.n = a.shape[0]

    def forward(self, v):
        return np.asarray(v) @ self.a.T


def zero_model(n):
    m = ResNet(n, 1, 1, 3)
    m.params[:] = 0
    return m


def test_identity_model_gives_constant_trajectory(trig7):
    v = np.arange(7.0)
    traj = rollout(zero_model(7), v, 5, delta=0.1)
    assert traj.kind == "predicted" and traj.steps == 5
    assert np.array_equal(traj.coeffs, np.tile(v, (6, 1)))


def test_field_initial_condition_is_projected(trig7):
    u = half_exp_sin(trig7.grid)
    traj = rollout(zero_model(7), FieldSample(trig7.grid, u), 1, trig7)
    assert np.allclose(traj.coeffs[0], trig7.project(u))


def test_rollout_composes():
    m = ResNet(3, 2, 2, 5, seed=8)
    v = np.array([0.2, -0.1, 0.4])
    long = rollout(m, v, 7)
    split = rollout(m, rollout(m, v, 3).coeffs[-1], 4)
    assert np.array_equal(long.coeffs[3:], split.coeffs)


def test_rollout_divergence_guard():
    m = zero_model(2)
    m.layers[0][-1][1][:] = 1e6  # constant push of 1e6 per step
    with pytest.raises(BlowUpError) as err:
        rollout(m, np.zeros(2), 10)
    assert err.value.step == 1


def test_optimal_equals_exact_modal_in_invariant_space(trig7):
    u0 = lambda p: np.cos(p[:, 0]) + 0.3 * np.sin(2 * p[:, 0])
    opt = reference_trajectory(trig7, u0, 20, 0.1, ADV, "optimal-projection")
    ex = reference_trajectory(trig7, u0, 20, 0.1, ADV, "exact-modal")
    assert np.allclose(opt.coeffs, ex.coeffs, atol=1e-12)


def test_diffusion_decay_sequence(sine5):
    u0 = lambda p: np.sin(p[:, 0]) * np.sqrt(2 / np.pi)
    opt = reference_trajectory(sine5, u0, 5, 0.1, DIFF)
    assert np.allclose(opt.coeffs[:, 0], np.exp(-0.5 * 0.1 * np.arange(6)), rtol=1e-10)


def test_relative_error_trivial_cases(trig7):
    b = Trajectory(0.1, np.random.default_rng(0).standard_normal((4, 7)), "optimal-projection")
    a = Trajectory(0.1, 1.1 * b.coeffs, "predicted")
    assert np.allclose(relative_error(b, b, trig7), 0)
    assert np.allclose(relative_error(a, b, trig7), 0.1)
    assert np.allclose(relative_error(a, b, norm="coeff"), 0.1)


def test_relative_error_flags_zero_reference(trig7):
    ref = np.zeros((2, 7))
    ref[1, 0] = 1.0
    out = relative_error(np.ones((2, 7)), ref, norm="coeff")
    assert np.isnan(out[0]) and np.isfinite(out[1])


def test_relative_error_axis_mismatch(trig7):
    with pytest.raises(ValueError):
        relative_error(np.zeros((3, 7)), np.ones((4, 7)), norm="coeff")


def test_perfect_surrogate_bound_vanishes(trig7):
    model = LinearModel(propagator_matrix(trig7, ADV, 0.1))
    u0 = lambda p: np.cos(p[:, 0]) - 0.5 * np.sin(3 * p[:, 0])
    probe = np.random.default_rng(0).uniform(-1, 1, (100, 7))
    rep = theorem_bound_check(model, trig7, ADV, 0.1, probe, u0, 20)
    assert rep.eps_dnn < 1e-14
    assert max(rep.bound_rhs) < 1e-12 and max(rep.coeff_err) < 1e-12
    assert rep.coeff_err[0] == 0.0
    assert rep.holds and rep.decomposition_holds


def test_bound_monotone_when_norm_at_least_one():
    rhs = error_bound_rhs(1.0, 0.01, np.ones(10), np.full(10, 0.001), 1.0)
    assert rhs[0] == 0 and np.all(np.diff(rhs) >= 0)


def test_report_json_and_imperfect_model(tmp_path, sine5):
    a = propagator_matrix(sine5, DIFF, 0.1)
    model = LinearModel(a * 1.001)
    # random box points alone underestimate the norms of a linear map; the axes make them exact
    probe = np.vstack([np.eye(5), np.random.default_rng(1).uniform(-1, 1, (500, 5))])
    rep = theorem_bound_check(model, sine5, DIFF, 0.1, probe, quartic, 30, probe_description="test")
    assert rep.holds and rep.solution_holds
    assert rep.eps_dnn == pytest.approx(0.001 * np.linalg.norm(a, 2), rel=1e-9)
    doc = json.loads(rep.to_json(tmp_path / "r.json"))
    for key in ("times", "rel_err_field", "rel_err_coeff", "eps_proj", "eps_dnn", "norm_N",
                "norm_PE", "bound_rhs", "holds"):
        assert key in doc
    assert len(doc["times"]) == len(doc["bound_rhs"]) == 31
    assert all(x >= 0 for x in doc["bound_rhs"] + doc["eps_proj"])


def test_empty_probe_rejected(trig7):
    with pytest.raises(ValueError):
        theorem_bound_check(zero_model(7), trig7, ADV, 0.1, np.zeros((0, 7)), half_exp_sin, 3)


@pytest.mark.parametrize("pde,u0,steps", [(ADV, half_exp_sin, 200), (DIFF, quartic, 30)])
def test_exact_modal_projection_bound(request, pde, u0, steps):
    basis = request.getfixturevalue("trig7" if pde is ADV else "sine5")
    r = exact_modal_bound_check(basis, pde, 0.1, u0, steps)
    assert r["holds"]
    assert np.all(r["lhs"] <= r["rhs"] + 1e-10)


def test_one_step_surrogate_matches_oracle(trig7):
    # a linear model fitted by least squares on exact pairs reproduces advect_exact
    x = np.random.default_rng(2).uniform(-1, 1, (200, 7))
    y = advect_exact(trig7, x, 0.1)
    a = np.linalg.lstsq(x, y, rcond=None)[0].T
    v = np.linspace(-0.5, 0.5, 7)
    assert np.allclose(rollout(LinearModel(a), v, 1).coeffs[1], advect_exact(trig7, v, 0.1), atol=1e-10)
