import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisowillmore import AnisotropyModel, wulff_sample
from anisowillmore.anisotropy import wulff_perimeter
from anisowillmore.errors import InvalidInputError, NearSingularError, UnsupportedRequestError
from anisowillmore.fdcheck import check_dual_sq, check_gamma, model_zoo, random_points

PLANAR = list(model_zoo(2).items())
SPATIAL = list(model_zoo(3).items())

finite = st.floats(-10, 10, allow_nan=False)
vec2 = st.tuples(finite, finite).filter(lambda v: np.hypot(*v) > 0.1)


def test_gamma_values():
    assert AnisotropyModel.elliptic(6, 1).gamma([1.0, 0.0]) == pytest.approx(6.0)
    assert AnisotropyModel.isotropic().gamma([3.0, 4.0]) == pytest.approx(5.0)
    assert AnisotropyModel.reg_l1(1e-12).gamma([1.0, -2.0]) == pytest.approx(3.0, abs=1e-5)


def test_reg_linf_formula():
    eps, p = 1e-3, np.array([0.3, -0.8])
    n2 = p @ p
    expected = 0.5 * np.sqrt(eps * n2 + (p[0] + p[1]) ** 2) + 0.5 * np.sqrt(eps * n2 + (p[0] - p[1]) ** 2)
    assert AnisotropyModel.reg_linf(eps).gamma(p) == pytest.approx(expected, rel=1e-14)


def test_gamma_gradient_examples():
    g, _, _ = AnisotropyModel.isotropic().gamma_derivatives([0.0, 1.0])
    np.testing.assert_allclose(g, [0.0, 1.0])
    g, _, _ = AnisotropyModel.elliptic(2, 1).gamma_derivatives([1.0, 0.0])
    np.testing.assert_allclose(g, [2.0, 0.0])


def test_reg_l1_third_order_matches_fd():
    model = AnisotropyModel.reg_l1(1e-3)
    assert check_gamma(model, np.array([[0.3, 0.7]])) <= 1e-5


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        AnisotropyModel.isotropic().gamma([np.nan, 1.0])
    with pytest.raises(InvalidInputError):
        AnisotropyModel.reg_l1(0.0)
    with pytest.raises(InvalidInputError):
        AnisotropyModel.elliptic(1.0, -2.0)
    with pytest.raises(NearSingularError):
        AnisotropyModel.elliptic(2, 1).gamma_derivatives([0.0, 0.0])
    with pytest.raises(NearSingularError):
        AnisotropyModel.isotropic().duality_map([0.0, 1e-12])


def test_dual_sq_examples():
    assert AnisotropyModel.elliptic(6, 1).dual_sq([6.0, 0.0]) == pytest.approx(1.0)
    iso = AnisotropyModel.isotropic()
    g, h, _ = iso.dual_sq_derivatives(np.zeros(2), 2)
    assert iso.dual_sq(np.zeros(2)) == 0.0
    np.testing.assert_array_equal(g, 0.0)
    np.testing.assert_allclose(h, 2.0 * np.eye(2))
    assert check_dual_sq(AnisotropyModel.reg_linf(1e-4), np.array([[0.5, 0.2]])) <= 1e-4


def test_crystalline_duals_are_paired():
    eps = 1e-3
    l1, linf = AnisotropyModel.reg_l1(eps), AnisotropyModel.reg_linf(eps)
    z = np.array([0.4, -1.1])
    assert l1.dual_norm(z) == pytest.approx(linf.gamma(z), rel=1e-14)
    assert linf.dual_norm(z) == pytest.approx(l1.gamma(z), rel=1e-14)


def test_dual_fallback_near_zero():
    model = AnisotropyModel.reg_l1(1e-3)
    z = np.array([1e-12, -2e-12])
    g, h, t = model.dual_sq_derivatives(z, 3)
    c = model._fallback_c
    np.testing.assert_allclose(g, 2 * c * z)
    np.testing.assert_allclose(h, 2 * c * np.eye(2))
    np.testing.assert_array_equal(t, 0.0)
    assert np.all(np.isfinite(g))


def test_quad_sum_without_dual():
    model = AnisotropyModel.quad_sum([np.diag([2.0, 1.0]), np.eye(2)])
    assert model.gamma([1.0, 0.0]) == pytest.approx(np.sqrt(2.0) + 1.0)
    with pytest.raises(UnsupportedRequestError):
        model.dual_sq([1.0, 0.0])


def test_duality_map_examples():
    np.testing.assert_allclose(AnisotropyModel.isotropic().duality_map([2.0, 0.0]), [2.0, 0.0])
    np.testing.assert_allclose(AnisotropyModel.elliptic(2, 1).duality_map([2.0, 0.0]), [0.5, 0.0])


def test_duality_round_trip(rng):
    model = AnisotropyModel.elliptic(2, 1)
    z = random_points(rng, 100)
    back = model.duality_map_inverse(model.duality_map(z))
    assert np.max(np.linalg.norm(back - z, axis=1) / np.linalg.norm(z, axis=1)) <= 1e-10


@pytest.mark.parametrize("name,model", PLANAR + SPATIAL)
def test_derivatives_match_fd(name, model, rng):
    pts = random_points(rng, 100, dim=model.dim)
    assert check_gamma(model, pts) <= 1e-4
    assert check_dual_sq(model, pts) <= 1e-4


@pytest.mark.parametrize("name,model", PLANAR)
@given(p=vec2, lam=st.floats(-50, 50).filter(lambda x: abs(x) > 1e-3))
def test_homogeneity(name, model, p, lam):
    p = np.array(p)
    g = model.gamma(p)
    assert g > 0
    assert abs(model.gamma(lam * p) - abs(lam) * g) <= 1e-12 * abs(lam) * g
    grad, _, _ = model.gamma_derivatives(p)
    grad_scaled, _, _ = model.gamma_derivatives(abs(lam) * p)
    np.testing.assert_allclose(grad_scaled, grad, atol=1e-12)


@pytest.mark.parametrize("name,model", PLANAR)
@given(z=vec2)
def test_duality_map_is_odd(name, model, z):
    z = np.array(z)
    assert np.max(np.abs(model.duality_map(-z) + model.duality_map(z))) <= 1e-14


@pytest.mark.parametrize("model", [AnisotropyModel.isotropic(), AnisotropyModel.elliptic(6, 1)])
def test_wulff_boundary_is_dual_unit_sphere(model, rng):
    xi = random_points(rng, 100)
    g, _, _ = model.gamma_derivatives(xi)
    np.testing.assert_allclose(model.dual_norm(g), 1.0, atol=1e-10)


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
@pytest.mark.parametrize("kind", ["reg_l1", "reg_linf"])
def test_regularized_wulff_boundary(kind, eps, rng):
    model = getattr(AnisotropyModel, kind)(eps)
    g, _, _ = model.gamma_derivatives(random_points(rng, 200))
    assert np.max(np.abs(model.dual_norm(g) - 1.0)) <= 10 * np.sqrt(eps)


def test_wulff_sample_examples():
    v = wulff_sample(AnisotropyModel.elliptic(6, 1), 1.0, 8)
    np.testing.assert_allclose(v[0], [6.0, 0.0])
    sq = wulff_sample(AnisotropyModel.isotropic(), 2.0, 4)
    np.testing.assert_allclose(sq, [[2, 0], [0, 2], [-2, 0], [0, -2]], atol=1e-15)


@pytest.mark.parametrize("eps", [1e-4, 1e-3])
def test_regularized_wulff_sample_residual(eps):
    # at the axis normals the vertex is about (1 + sqrt(eps)) e_1, where the
    # paired dual is about 1, so the residual is sqrt(eps) to leading order
    model = AnisotropyModel.reg_l1(eps)
    res = np.abs(model.dual_norm(wulff_sample(model, 1.0, 200)) - 1.0)
    assert np.sqrt(eps) * 0.9 <= res.max() <= np.sqrt(eps) * 1.1
    assert np.median(res) <= np.sqrt(eps)


@pytest.mark.parametrize("spacing", ["angle", "arclength"])
@pytest.mark.parametrize("phase", [0.0, 0.5])
def test_wulff_sample_is_counterclockwise(spacing, phase):
    from anisowillmore.geometry import SimplicialSurface, enclosed_area

    for model in (AnisotropyModel.elliptic(6, 1), AnisotropyModel.reg_linf(1e-3)):
        X = SimplicialSurface.closed_polygon(wulff_sample(model, 1.0, 64, spacing=spacing, phase=phase))
        assert enclosed_area(X) > 0
        ang = np.unwrap(np.arctan2(X.vertices[:, 1], X.vertices[:, 0]))
        assert np.all(np.diff(ang) > 0)


def test_arclength_spacing_is_uniform():
    model = AnisotropyModel.elliptic(6, 1)
    pts = wulff_sample(model, 1.0, 256, spacing="arclength")
    edges = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    # chords are slightly shorter than arcs near the sharp tips
    assert edges.max() / edges.min() < 1.02
    assert edges.sum() == pytest.approx(wulff_perimeter(model), rel=1e-3)


def test_wulff_sample_rejects_bad_arguments():
    iso = AnisotropyModel.isotropic()
    with pytest.raises(InvalidInputError):
        wulff_sample(iso, 1.0, 2)
    with pytest.raises(InvalidInputError):
        wulff_sample(iso, 1.0, 8, phase=1.0)
    with pytest.raises(InvalidInputError):
        wulff_sample(iso, 1.0, 8, spacing="random")
    with pytest.raises(InvalidInputError):
        wulff_sample(AnisotropyModel.reg_l1(1e-3), 1.0, 8, spacing="parameter")


@given(st.floats(0.2, 8), st.floats(0.2, 8), st.floats(0.1, 5), st.integers(3, 64), st.floats(0, 0.99))
def test_parameter_spacing_is_affine_regular_polygon(a1, a2, R, m, phase):
    model = AnisotropyModel.elliptic(a1, a2)
    pts = wulff_sample(model, R, m, spacing="parameter", phase=phase)
    s = 2 * np.pi * (np.arange(m) + phase) / m
    np.testing.assert_allclose(pts, R * np.column_stack([a1 * np.cos(s), a2 * np.sin(s)]), atol=1e-12 * R * max(a1, a2))
    np.testing.assert_allclose(model.dual_norm(pts), R, rtol=1e-12)


def test_wulff_perimeter_of_circle():
    assert wulff_perimeter(AnisotropyModel.isotropic(), 2.0) == pytest.approx(4 * np.pi, rel=1e-12)
