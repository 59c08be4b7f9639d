import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modalflow.basis import (Basis, BasisError, FieldSample, PhysicalDomain, RankDeficiencyError,
                             dirichlet_interval, make_basis, orthonormalize, periodic_interval,
                             uniform_nodes)


@pytest.mark.parametrize("name", ["trig7", "sine5", "burgers_basis", "square25"])
def test_gram_is_identity(name, request):
    b = request.getfixturevalue(name)
    assert np.abs(b.gram() - np.eye(b.n)).max() < 1e-10


def test_sizes(trig7, sine5, square25):
    assert (trig7.n, sine5.n, square25.n) == (7, 5, 25)
    assert square25.labels[0] == "1"
    assert square25.labels[-1] == "sin(2x)sin(y)"


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 7, elements=st.floats(-10, 10)))
def test_lift_project_roundtrip_and_isometry(v):
    b = make_basis(periodic_interval(), "real-trig", 3)
    u = b.lift_values(v)
    assert np.allclose(b.project(u), v, atol=1e-12 * (1 + np.abs(v).max()))
    assert math.isclose(b.norm(u), np.linalg.norm(v), rel_tol=1e-12, abs_tol=1e-12)


def test_neg_sin_projects_exactly():
    b = make_basis(dirichlet_interval(-math.pi, math.pi), "sine", 5, nodes=128, quadrature="uniform")
    u = -np.sin(b.grid[:, 0])
    v = b.project(u)
    assert v[0] == pytest.approx(-math.sqrt(math.pi), rel=1e-13)
    assert np.abs(v[1:]).max() < 1e-13
    assert b.projection_error(u) < 1e-12


def test_out_of_space_mode_projects_to_zero(trig7):
    assert np.abs(trig7.project(np.sin(7 * trig7.grid[:, 0]))).max() < 1e-12


def test_projection_error_pythagoras(trig7):
    u = 0.5 * np.exp(np.sin(trig7.grid[:, 0]))
    v = trig7.project(u)
    err = trig7.projection_error(u)
    assert err > 0
    assert trig7.norm(u) ** 2 == pytest.approx(np.dot(v, v) + err ** 2, rel=1e-12)


def test_lift_on_other_grid(sine5):
    x = np.linspace(0, np.pi, 11)[:, None]
    f = sine5.lift(np.eye(5)[2], x)
    assert np.allclose(f.values, np.sin(3 * x[:, 0]) * math.sqrt(2 / math.pi))


def test_raw_modal_conversion(trig7):
    raw = np.arange(1.0, 8.0)
    assert np.allclose(trig7.modal_to_raw(trig7.raw_to_modal(raw)), raw)


def test_orthonormalize_detects_dependence():
    dom = periodic_interval()
    quad = (uniform_nodes(0, 2 * math.pi, 64),)
    with pytest.raises(RankDeficiencyError) as err:
        orthonormalize(dom, quad, factors=((("cos", 1),), (("sin", 1),), (("cos", 1),)))
    assert err.value.index == 2


@pytest.mark.parametrize("args", [
    (periodic_interval(), "sine", 3),
    (dirichlet_interval(), "real-trig", 3),
    (periodic_interval(), "wavelets", 3),
])
def test_bad_basis_requests(args):
    with pytest.raises(BasisError):
        make_basis(*args)


def test_too_few_nodes():
    with pytest.raises(BasisError):
        make_basis(periodic_interval(), "real-trig", 3, nodes=8)


def test_wrong_grid_rejected(trig7):
    with pytest.raises(BasisError):
        trig7.project(FieldSample(np.linspace(0, 1, 5), np.zeros(5)))


def test_domain_validation():
    with pytest.raises(ValueError):
        PhysicalDomain(((1.0, 0.0),), ("periodic",))


def test_serialization_roundtrip(tmp_path, square25):
    square25.save(tmp_path / "b.json")
    back = Basis.load(tmp_path / "b.json")
    assert back.n == 25
    assert np.allclose(back.vandermonde, square25.vandermonde)


def test_field_csv_roundtrip(tmp_path, sine5):
    f = sine5.lift(np.arange(5.0))
    f.to_csv(tmp_path / "f.csv")
    assert open(tmp_path / "f.csv").readline().strip() == "x,u"
    g = FieldSample.from_csv(tmp_path / "f.csv")
    assert np.array_equal(g.values, f.values) and np.array_equal(g.grid, f.grid)
