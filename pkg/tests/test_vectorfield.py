import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectralflex import symexpr as se
from spectralflex import vectorfield as vf
from spectralflex.vectorfield import VectorField, lie_bracket

from conftest import torus_points, trig_exprs

dx, dy, dz1, dz2 = (VectorField.coordinate(4, i) for i in range(4))


def field_strategy():
    return st.tuples(*[trig_exprs(depth=2)] * 4).map(VectorField)


def test_coordinate_brackets_vanish():
    assert lie_bracket(dx, dy).is_zero()


def test_bracket_example_point():
    spec = vf.preset("t4-d1")
    B = lie_bracket(spec.V, spec.W)
    assert np.allclose(B([0, 0, np.pi / 2, 0]), [0, 0, 1, 0], atol=1e-15)


def test_bracket_dimension_mismatch():
    with pytest.raises(vf.DimensionError):
        lie_bracket(dx, VectorField.coordinate(3, 0))


def test_field_dimension_validated():
    with pytest.raises(vf.DimensionError):
        VectorField((se.sin(1, 2), se.const(0)))


@settings(max_examples=25, deadline=None)
@given(field_strategy(), field_strategy(), field_strategy())
def test_jacobi_identity(X, Y, Z):
    J = (lie_bracket(lie_bracket(X, Y), Z) + lie_bracket(lie_bracket(Y, Z), X)
         + lie_bracket(lie_bracket(Z, X), Y))
    pts = torus_points(np.random.default_rng(1), 100)
    assert np.abs(J(pts)).max() < 1e-10
    assert J.is_zero()


@settings(max_examples=40, deadline=None)
@given(field_strategy(), field_strategy())
def test_antisymmetry(X, Y):
    assert (lie_bracket(X, Y) + lie_bracket(Y, X)).is_zero()


@settings(max_examples=30, deadline=None)
@given(trig_exprs(depth=2), field_strategy(), field_strategy())
def test_leibniz_first_slot(f, X, Y):
    lhs = lie_bracket(X.scale(f), Y)
    rhs = lie_bracket(X, Y).scale(f) - X.scale(Y.apply(f))
    pts = torus_points(np.random.default_rng(2), 100)
    assert np.abs(lhs(pts) - rhs(pts)).max() < 1e-10


def test_divergence_examples():
    assert se.is_zero(vf.divergence(dx))
    assert vf.divergence(VectorField.coordinate(4, 0, se.sin(1, 0))) == se.cos(1, 0)
    for name in vf.PRESETS:
        assert se.is_zero(vf.divergence(vf.preset(name).V))


def test_construction_d1():
    spec = vf.preset("t4-d1")
    V, W = vf.build_construction(spec)
    h = se.add(se.cos(1, 2), se.cos(1, 3))
    assert V == VectorField((se.const(1), h, se.const(0), se.const(0)))
    assert W == VectorField((se.const(0), se.const(0), se.sin(1, 0), se.cos(1, 0)))


def test_construction_d2_substitution():
    W = vf.preset("t4-d2-singular").W
    assert W[2] == se.add(se.sin(1, 0), se.sin(2, 0))
    assert W[3] == se.add(se.cos(1, 0), se.cos(2, 0))


def test_non_spanning_rejected():
    with pytest.raises(vf.ConstructionError):
        vf.ConstructionSpec(1, vf.morse_h(), (dz1, dz1))


def test_wrong_field_count_rejected():
    with pytest.raises(vf.ConstructionError):
        vf.ConstructionSpec(2, vf.morse_h(), (dz1, dz2))


def test_z_fields_must_be_tangent_to_m():
    with pytest.raises(vf.ConstructionError):
        vf.ConstructionSpec(1, vf.morse_h(), (dx, dz2))


def test_step1_alpha0_is_w():
    spec = vf.preset("t4-d2-singular")
    assert vf.step1_closed_form(spec, 0) == spec.W


@pytest.mark.parametrize("name", vf.PRESETS)
@pytest.mark.parametrize("alpha", [1, 2, 3, 4])
def test_step1_closed_form_matches_brackets(name, alpha):
    spec = vf.preset(name)
    a = vf.step1_closed_form(spec, alpha)
    b = vf.iterated_bracket(spec.V, spec.W, alpha)
    pts = torus_points(np.random.default_rng(alpha), 1000)
    assert np.abs(a(pts) - b(pts)).max() < 1e-10
    assert a == b


def test_q_and_b_coefficients():
    assert vf.q_coefficients(1) == [1, 0, 1]
    assert vf.q_coefficients(2) == [4, 0, 5, 0, 1]
    assert vf.lemma_b_coefficients(1) == [1]
    assert vf.lemma_b_coefficients(2) == [3, -3]
    assert all(vf.lemma_b_coefficients(5))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_basis_derivative_identity(d):
    x = np.random.default_rng(d).uniform(0, 2 * np.pi, (1000, 1))
    for l in range(1, 2 * d + 1):
        res = vf.basis_identity_residual(d, l)
        assert se.is_zero(res)
        assert np.abs(se.evaluate(res, x)).max() < 1e-10


def test_q_annihilates_basis():
    for d in (1, 2, 3):
        for l in range(1, 2 * d + 1):
            assert se.is_zero(vf.apply_polynomial(vf.q_coefficients(d), vf.phi(l)))


@pytest.mark.parametrize("name", vf.PRESETS)
def test_xi_dual_construction(name):
    spec = vf.preset(name)
    pts = torus_points(np.random.default_rng(3), 1000)
    for r in range(1, 2 * spec.d + 1):
        a = vf.xi_bracket_form(spec, r)
        b = vf.xi_closed_form(spec, r)
        assert np.abs(a(pts) - b(pts)).max() < 1e-9
        vals = vf.xi_field(spec, r)(pts)
        assert np.abs(vals[:, [0, 2, 3]]).max() == 0.0


def test_xi_vanishes_for_constant_h():
    spec = vf.ConstructionSpec(1, se.const(3), (dz1, dz2))
    for r in (1, 2):
        assert vf.xi_field(spec, r).is_zero()


def test_xi_range_checked():
    with pytest.raises(ValueError):
        vf.xi_field(vf.preset("t4-d1"), 3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_wronskian_nondegenerate(d):
    x = np.random.default_rng(d).uniform(0, 2 * np.pi, 1000)
    dets = np.abs(np.linalg.det(vf.wronskian(d, x)))
    # the determinant is constant in x for this basis
    assert dets.min() > 0.5
    assert np.ptp(dets) < 1e-8 * dets.max()


@pytest.mark.parametrize("name", vf.PRESETS)
def test_step3_y_component(name):
    spec = vf.preset(name)
    pts = torus_points(np.random.default_rng(4), 200)
    for beta in range(0, 4 * spec.d):
        B = lie_bracket(spec.W, vf.iterated_bracket(spec.V, spec.W, beta))
        pred = se.evaluate(vf.step3_y_component(spec, beta), pts)
        assert np.abs(B(pts)[:, 1] - pred).max() < 1e-9


def test_field_call_shapes():
    W = vf.preset("t4-d1").W
    assert W([0.0, 0, 0, 0]).shape == (4,)
    assert W(np.zeros((5, 4))).shape == (5, 4)


def test_unknown_preset():
    with pytest.raises(KeyError):
        vf.preset("nope")
