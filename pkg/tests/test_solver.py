import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisowillmore import AnisotropyModel, SimplicialSurface, SolverConfig, run_flow, time_step, wulff_sample
from anisowillmore.analysis import discrete_wulff_recursion, exact_wulff_radius
from anisowillmore.errors import InvalidConfigError, NearSingularError, NonconvergenceError
from anisowillmore.geometry import mesh_size, vertex_normals
from anisowillmore.lagrangian import lagrangian_gradient
from anisowillmore.solver import solve_adjoint, solve_inner, solve_symmetric

from oracles import lambda_equilibrium_radius

ISO = AnisotropyModel.isotropic()
ELL = AnisotropyModel.elliptic(6, 1)


def wulff_polygon(model, R, m, **kw):
    return SimplicialSurface.closed_polygon(wulff_sample(model, R, m, **kw))


def rotation(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        SolverConfig(tau=0.0, tau_tilde=0.1)
    with pytest.raises(InvalidConfigError):
        SolverConfig(tau=0.1, tau_tilde=0.1, lam=-1)
    with pytest.raises(InvalidConfigError):
        SolverConfig(tau=0.1, tau_tilde=0.1, backtrack=1.0)
    with pytest.raises(InvalidConfigError):
        SolverConfig(tau=0.1, tau_tilde=0.1, max_newton_iter=0)
    assert SolverConfig(tau=0.1, tau_tilde=0.01).params.c == pytest.approx(1000.0)


def test_symmetric_solve_dense_fallback():
    import scipy.sparse as sp

    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(solve_symmetric(A, np.array([2.0, 3.0]), dense_limit=10), [3.0, 2.0])
    with pytest.raises(NearSingularError):
        solve_symmetric(sp.csr_matrix((2, 2)), np.ones(2), dense_limit=10)


# ---- inner problem and adjoint ---------------------------------------------------


@pytest.mark.parametrize("m", [64, 128, 256])
def test_inner_step_of_ellipse_is_scaled_wulff_shape(m):
    X = wulff_polygon(ELL, 1.0, m, spacing="arclength")
    Y = solve_inner(ELL, X, 1e-4, SolverConfig(tau=1e-4, tau_tilde=1e-4))
    h = mesh_size(X)
    assert np.abs(Y.vertices - 0.9999 * X.vertices).max() <= 1e-4 * h**2


def test_inner_step_of_circle():
    X = wulff_polygon(ISO, 1.0, 64)
    Y = solve_inner(ISO, X, 1e-4, SolverConfig(tau=1e-4, tau_tilde=1e-4))
    np.testing.assert_allclose(np.linalg.norm(Y.vertices, axis=1), 1 - 1e-4, atol=1e-12)
    Y = solve_inner(ISO, X, 1e-12, SolverConfig(tau=1e-12, tau_tilde=1e-12))
    assert np.abs(Y.vertices - X.vertices).max() <= 1e-8


def test_inner_step_stops_at_roundoff():
    # unreachable tolerances: the solve must stop once the residual is at rounding level
    X = wulff_polygon(ELL, 1.0, 64, spacing="arclength")
    cfg = SolverConfig(tau=1e-2, tau_tilde=1e-2, newton_rtol=1e-300, newton_atol=1e-300)
    Y = solve_inner(ELL, X, 1e-2, cfg)
    Y2 = solve_inner(ELL, X, 1e-2, cfg, Y0=Y)
    assert np.abs(Y2.vertices - Y.vertices).max() <= 1e-12


def test_inner_nonconvergence_is_reported():
    X = wulff_polygon(ELL, 1.0, 32)
    with pytest.raises(NonconvergenceError) as info:
        solve_inner(ELL, X, 0.5, SolverConfig(tau=0.5, tau_tilde=0.5, max_newton_iter=1))
    assert len(info.value.residuals) == 2


def test_adjoint_zero_tau():
    X = wulff_polygon(ELL, 1.0, 16)
    Y = X.with_vertices(0.99 * X.vertices)
    assert not np.any(solve_adjoint(ELL, X, Y, 0.0, 0.01))


def test_adjoint_solves_y_block(rng):
    from anisowillmore.fdcheck import random_step_configuration

    Xk, X, Y, _ = random_step_configuration(rng, 10)
    model = AnisotropyModel.reg_linf(1e-2)
    P = solve_adjoint(model, X, Y, 0.05, 0.02)
    cfg = SolverConfig(tau=0.05, tau_tilde=0.02)
    _, g_Y, _ = lagrangian_gradient(model, Xk, X, Y, P, cfg.params)
    assert np.abs(g_Y).max() <= 1e-9


def test_adjoint_is_radial_on_wulff_shapes():
    tangential = []
    for m in (64, 128, 256):
        X = wulff_polygon(ELL, 1.0, m, spacing="arclength")
        Y = solve_inner(ELL, X, 1e-4, SolverConfig(tau=1e-2, tau_tilde=1e-4))
        P = solve_adjoint(ELL, X, Y, 1e-2, 1e-4)
        g, _, _ = ELL.gamma_derivatives(vertex_normals(X))
        g /= np.linalg.norm(g, axis=1)[:, None]
        cross = np.abs(P[:, 0] * g[:, 1] - P[:, 1] * g[:, 0]) / np.linalg.norm(P, axis=1)
        tangential.append(cross.max())
    assert tangential[2] <= 1e-3
    assert np.log2(tangential[0] / tangential[2]) / 2 >= 1.0


# ---- time steps ------------------------------------------------------------------


def test_circle_step_follows_recursion():
    X = wulff_polygon(ISO, 1.0, 64)
    h = mesh_size(X)
    res = time_step(ISO, X, SolverConfig(tau=h * h, tau_tilde=h * h))
    R = np.linalg.norm(res.X.vertices, axis=1)
    R_rec, R_inner = discrete_wulff_recursion(1.0, h * h, h * h)
    assert abs(R.mean() - R_rec) <= 1e-9
    assert R.std() <= 1e-12
    np.testing.assert_allclose(np.linalg.norm(res.Y.vertices, axis=1), R_inner, atol=1e-9)
    assert res.diagnostics.energy_out <= res.diagnostics.energy_out_trivial


def test_newton_converges_superlinearly():
    X = wulff_polygon(ISO, 1.0, 64)
    h = mesh_size(X)
    hist = time_step(ISO, X, SolverConfig(tau=h, tau_tilde=h * h)).diagnostics.residual_history
    assert len(hist) >= 3
    ratios = [b / a for a, b in zip(hist[-3:], hist[-2:])]
    assert ratios[-1] < ratios[0] < 0.1


def test_tiny_time_step_keeps_curve():
    X = wulff_polygon(ISO, 1.0, 64)
    h = mesh_size(X)
    res = time_step(ISO, X, SolverConfig(tau=1e-14, tau_tilde=h * h))
    assert np.abs(res.X.vertices - X.vertices).max() <= 1e-7


def test_lambda_equilibrium_is_stationary():
    model = AnisotropyModel.elliptic(4, 1)
    R_star = lambda_equilibrium_radius(4.0, 0.01)
    X = wulff_polygon(model, R_star, 160, spacing="parameter")
    h = mesh_size(X)
    res = time_step(model, X, SolverConfig(tau=0.01, tau_tilde=0.01, lam=4.0))
    # the affine image of a regular polygon is an exact discrete equilibrium
    assert np.abs(res.X.vertices - X.vertices).max() <= 1e-3 * h**2


def test_single_step_flow_equals_time_step():
    X = wulff_polygon(ELL, 1.0, 32, spacing="arclength")
    cfg = SolverConfig(tau=0.05, tau_tilde=0.01, steps=1)
    traj = run_flow(ELL, X, cfg)
    res = time_step(ELL, X, cfg)
    assert len(traj) == 2
    np.testing.assert_array_equal(traj.final.vertices, res.X.vertices)
    np.testing.assert_allclose(traj.times, [0.0, 0.05])


def test_flow_reports_failing_step():
    X = wulff_polygon(ISO, 1.0, 16)
    cfg = SolverConfig(tau=0.5, tau_tilde=0.05, steps=3, max_newton_iter=1, continuation_stages=0)
    seen = []
    with pytest.raises(NonconvergenceError, match="step 1"):
        run_flow(ISO, X, cfg, callback=seen.append)
    assert [r.step for r in seen] == [0]


def test_degenerate_initial_curve():
    X = SimplicialSurface.closed_polygon([[0, 0], [1, 0], [1, 0], [0, 1]])
    with pytest.raises(NearSingularError):
        run_flow(ISO, X, SolverConfig(tau=0.01, tau_tilde=0.01))


def test_circle_radii_track_exact_solution():
    X = wulff_polygon(ISO, 1.0, 64)
    h = mesh_size(X)
    traj = run_flow(ISO, X, SolverConfig(tau=h, tau_tilde=h * h, steps=100))
    for rec in traj.records[::10]:
        R = np.linalg.norm(rec.surface.vertices, axis=1)
        assert R.std() <= 1e-8
        assert abs(R.mean() - exact_wulff_radius(1.0, rec.time)) <= 0.05 * h
    assert np.all(np.diff(traj.times) > 0)


@settings(max_examples=10)
@given(m=st.integers(8, 24), angle=st.floats(0, 2 * np.pi))
def test_isotropic_flow_is_frame_invariant(m, angle):
    X = wulff_polygon(ISO, 1.0, m)
    X = X.with_vertices(X.vertices * [1.0, 0.6])  # break the symmetry
    Q = rotation(angle)
    cfg = SolverConfig(tau=0.05, tau_tilde=0.01, steps=3)
    a = run_flow(ISO, X, cfg).final.vertices
    b = run_flow(ISO, X.with_vertices(X.vertices @ Q.T), cfg).final.vertices
    np.testing.assert_allclose(b, a @ Q.T, atol=1e-8)


@settings(max_examples=10)
@given(m=st.integers(6, 40))
def test_regular_polygon_stays_regular(m):
    X = wulff_polygon(ISO, 1.0, m)
    traj = run_flow(ISO, X, SolverConfig(tau=0.05, tau_tilde=0.01, steps=100))
    for rec in traj.records:
        R = np.linalg.norm(rec.surface.vertices, axis=1)
        assert R.max() - R.min() <= 1e-8


@pytest.mark.parametrize(
    "model,m,spacing",
    [(ELL, 64, "arclength"), (AnisotropyModel.reg_l1(1e-3), 64, "arclength"), (AnisotropyModel.elliptic(2, 1), 40, "angle")],
)
def test_outer_energy_decreases(model, m, spacing):
    X = wulff_polygon(model, 1.0, m, spacing=spacing, phase=0.5)
    h = mesh_size(X)
    traj = run_flow(model, X, SolverConfig(tau=h, tau_tilde=h * h, steps=10))
    for rec in traj.records[1:]:
        d = rec.diagnostics
        assert d.energy_out <= d.energy_out_trivial + 1e-10
        assert d.willmore > 0 and np.isfinite(d.willmore)
