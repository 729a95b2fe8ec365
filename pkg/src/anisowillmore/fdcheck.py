"""Central finite-difference oracles and the derivative verification suite.

The oracles only ever call value-level (or one-order-lower) functions, so
they stay independent of the analytic derivative code they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anisotropy import AnisotropyModel
from .assembly import a_gamma, a_gamma_derivatives, m_gamma, m_gamma_derivatives
from .geometry import SimplicialSurface, element_normal_map
from .lagrangian import StepParams, lagrangian_gradient, lagrangian_hessian, lagrangian_value


def _stencil(f, x, e):
    """Fourth-order central difference of ``f`` at ``x`` along the increment ``e`` (unscaled)."""
    return (8.0 * (np.asarray(f(x + e)) - np.asarray(f(x - e))) - (np.asarray(f(x + 2 * e)) - np.asarray(f(x - 2 * e)))) / 12.0


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Five-point central differences of a scalar (or array-valued) function; derivative axis appended last."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    out = np.zeros(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = step
        out[(...,) + idx] = _stencil(f, x, e) / step
    return out


def fd_directional(f, x: np.ndarray, v: np.ndarray, step: float = 1e-5):
    return _stencil(f, np.asarray(x, dtype=float), step * np.asarray(v, dtype=float)) / step


def rel_error(analytic, reference, floor: float = 1e-300) -> float:
    """Max-norm error relative to the larger of the two max-norms."""
    a = np.asarray(analytic, dtype=float)
    b = np.asarray(reference, dtype=float)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def _dense(A):
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A)


# ---- individual checks ---------------------------------------------------------
# Each returns the worst relative deviation found.


def check_gamma(model: AnisotropyModel, points: np.ndarray, step: float = 1e-5) -> float:
    worst = 0.0
    for p in points:
        g, h, t = model.gamma_derivatives(p, 3)
        worst = max(worst, rel_error(g, fd_gradient(model.gamma, p, step)))
        worst = max(worst, rel_error(h, fd_gradient(lambda q: model.gamma_derivatives(q, 1)[0], p, step)))
        worst = max(worst, rel_error(t, fd_gradient(lambda q: model.gamma_derivatives(q, 2)[1], p, step)))
    return worst


def check_dual_sq(model: AnisotropyModel, points: np.ndarray, step: float = 1e-5) -> float:
    worst = 0.0
    for z in points:
        g, h, t = model.dual_sq_derivatives(z, 3)
        worst = max(worst, rel_error(g, fd_gradient(model.dual_sq, z, step)))
        worst = max(worst, rel_error(h, fd_gradient(lambda q: model.dual_sq_derivatives(q, 1)[0], z, step)))
        worst = max(worst, rel_error(t, fd_gradient(lambda q: model.dual_sq_derivatives(q, 2)[1], z, step)))
    return worst


def check_normal_map(Xbar: np.ndarray, step: float = 1e-5) -> float:
    """Absolute deviation of ``dR``, ``d2R`` from central differences."""
    nm = element_normal_map(Xbar)
    dR_fd = fd_gradient(lambda x: element_normal_map(x, order=0).R, Xbar, step)
    d2R_fd = fd_gradient(lambda x: element_normal_map(x, order=1).dR, Xbar, step)
    return max(float(np.max(np.abs(nm.dR - dR_fd))), float(np.max(np.abs(nm.d2R - d2R_fd))))


def check_m_gamma(model: AnisotropyModel, Z: np.ndarray, X: SimplicialSurface, rng, step: float = 1e-5) -> dict:
    """All eight tensor families of ``M_gamma`` against finite differences."""
    V0 = X.vertices

    def mesh(x):
        return X.with_vertices(x)

    D = m_gamma_derivatives(model, Z, X)
    P = rng.standard_normal(Z.shape)
    W = rng.standard_normal(Z.shape)
    out = {}
    out["Z"] = rel_error(D.dZ, fd_gradient(lambda z: m_gamma(model, z, X), Z, step).ravel())
    out["X"] = rel_error(D.dX, fd_gradient(lambda x: m_gamma(model, Z, mesh(x)), V0, step).ravel())

    def dz(z, x, fam):
        return getattr(m_gamma_derivatives(model, z, mesh(x), {fam}), "d" + fam)

    out["ZZ"] = rel_error(_dense(D.dZZ), fd_gradient(lambda z: dz(z, V0, "Z"), Z, step).reshape(Z.size, -1))
    out["XX"] = rel_error(_dense(D.dXX), fd_gradient(lambda x: dz(Z, x, "X"), V0, step).reshape(Z.size, -1))
    out["ZX"] = rel_error(_dense(D.dZX), fd_gradient(lambda x: dz(Z, x, "Z"), V0, step).reshape(Z.size, -1))
    # third families: directional derivative of a second-order family
    out["ZZZ"] = rel_error(
        _dense(D.dZZZ(P)), _dense(fd_directional(lambda z: _dense(dz(z, V0, "ZZ")), Z, P, step))
    )
    out["ZZX"] = rel_error(
        _dense(D.dZZX(P)), fd_directional(lambda z: _dense(dz(z, V0, "ZX")), Z, P, step)
    )
    out["ZXX"] = rel_error(
        _dense(D.dZXX(P)), fd_directional(lambda z: _dense(dz(z, V0, "XX")), Z, P, step)
    )
    # the same tensors probed through an X slot
    out["ZZX/X"] = rel_error(
        _dense(D.dZZX(P)) @ W.ravel(), fd_directional(lambda x: _dense(dz(Z, x, "ZZ")) @ P.ravel(), V0, W, step)
    )
    out["ZXX/X"] = rel_error(
        _dense(D.dZXX(P)) @ W.ravel(), fd_directional(lambda x: _dense(dz(Z, x, "ZX")).T @ P.ravel(), V0, W, step)
    )
    return out


def check_a_gamma(model: AnisotropyModel, X: SimplicialSurface, rng, step: float = 1e-5) -> dict:
    V0 = X.vertices
    B = a_gamma_derivatives(model, X, 3)
    W = rng.standard_normal(V0.shape)
    first = fd_gradient(lambda x: a_gamma(model, X.with_vertices(x)), V0, step).ravel()
    second = fd_gradient(lambda x: a_gamma_derivatives(model, X.with_vertices(x), 1).first, V0, step)
    third = fd_directional(lambda x: _dense(a_gamma_derivatives(model, X.with_vertices(x), 2).second), V0, W, step)
    return {
        "first": rel_error(B.first, first),
        "second": rel_error(_dense(B.second), second.reshape(V0.size, -1)),
        "third": rel_error(_dense(B.third(W)), third),
    }


def check_lagrangian(
    model, Xk, X, Y, P, params: StepParams, step_grad=1e-5, step_hess=1e-5, directions: int | None = None, rng=None
) -> dict:
    """grad L and Hess L against differences of L and grad L.

    With ``directions=None`` every column is differenced; otherwise only the
    projections onto that many random directions are compared.
    """
    n = X.vertices.size
    shape = X.vertices.shape

    def unpack(u):
        return X.with_vertices(u[:n].reshape(shape)), X.with_vertices(u[n : 2 * n].reshape(shape)), u[2 * n :].reshape(shape)

    def value(u):
        return lagrangian_value(model, Xk, *unpack(u), params)

    def gradient(u):
        return np.concatenate(lagrangian_gradient(model, Xk, *unpack(u), params))

    u0 = np.concatenate([X.vertices.ravel(), Y.vertices.ravel(), P.ravel()])
    grad = gradient(u0)
    H = lagrangian_hessian(model, Xk, X, Y, P, params).matrix().toarray()
    if directions is None:
        grad_err = rel_error(grad, fd_gradient(value, u0, step_grad))
        hess_err = rel_error(H, fd_gradient(gradient, u0, step_hess))
    else:
        V = rng.standard_normal((directions, u0.size))
        grad_err = rel_error(V @ grad, [fd_directional(value, u0, v, step_grad) for v in V])
        hess_err = rel_error(V @ H, np.array([fd_directional(gradient, u0, v, step_hess) for v in V]))
    return {"gradient": grad_err, "hessian": hess_err, "symmetry": float(np.max(np.abs(H - H.T)))}


# ---- random instances -------------------------------------------------------


def random_polygon(rng, m: int = 8, jitter: float = 0.15) -> SimplicialSurface:
    """Star-shaped counterclockwise polygon with perturbed radii and angles."""
    theta = 2.0 * np.pi * (np.arange(m) + jitter * rng.uniform(-1, 1, m)) / m
    r = 1.0 + 0.25 * rng.uniform(-1, 1, m)
    return SimplicialSurface.closed_polygon(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


def random_strip(rng) -> SimplicialSurface:
    """Two triangles sharing an edge, randomly placed in R^3."""
    V = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.2]])
    V = V + 0.2 * rng.standard_normal(V.shape)
    return SimplicialSurface(V, np.array([[0, 1, 2], [1, 3, 2]]))


def random_points(rng, count: int, dim: int = 2, rmin: float = 0.1, rmax: float = 10.0) -> np.ndarray:
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(rmin, rmax, (count, 1))


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def model_zoo(dim: int = 2) -> dict[str, AnisotropyModel]:
    if dim == 2:
        return {
            "isotropic": AnisotropyModel.isotropic(),
            "elliptic(2,1)": AnisotropyModel.elliptic(2.0, 1.0),
            "reg_l1(1e-3)": AnisotropyModel.reg_l1(1e-3),
            "reg_linf(1e-3)": AnisotropyModel.reg_linf(1e-3),
        }
    G = [np.diag([1.0, 2.0, 0.5]), np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]])]
    return {
        "isotropic3": AnisotropyModel.isotropic(3),
        "elliptic(3,2,1)": AnisotropyModel.elliptic(3.0, 2.0, 1.0),
        "quad_sum": AnisotropyModel.quad_sum(G, dual=AnisotropyModel.elliptic(1.0, 2.0, 1.5)),
    }


def verification_suite(seed: int = 0, sizes=(8,), tol_scale: float = 1.0, instances: int = 20) -> list[CheckResult]:
    """Run every derivative check; each result carries its worst deviation and tolerance."""
    rng = np.random.default_rng(seed)
    results = []

    def add(name, dev, tol):
        results.append(CheckResult(name, dev, tol * tol_scale))

    for name, model in model_zoo(2).items():
        pts = random_points(rng, instances)
        add(f"gamma derivatives [{name}]", check_gamma(model, pts), 1e-4)
        add(f"dual_sq derivatives [{name}]", check_dual_sq(model, pts), 1e-4)
    for name, model in model_zoo(3).items():
        pts = random_points(rng, instances, dim=3)
        add(f"gamma derivatives [{name}]", check_gamma(model, pts), 1e-4)
        add(f"dual_sq derivatives [{name}]", check_dual_sq(model, pts), 1e-4)

    dev1 = max(check_normal_map(rng.standard_normal((2, 2))) for _ in range(instances))
    dev2 = max(check_normal_map(rng.standard_normal((3, 3))) for _ in range(instances))
    add("normal map d=1", dev1, 1e-9)
    add("normal map d=2", dev2, 1e-9)

    for d, zoo in ((1, model_zoo(2)), (2, model_zoo(3))):
        for name, model in zoo.items():
            worst_m: dict[str, float] = {}
            worst_a: dict[str, float] = {}
            for _ in range(instances):
                for m in sizes if d == 1 else (None,):
                    X = random_polygon(rng, m) if d == 1 else random_strip(rng)
                    Z = 0.3 * rng.standard_normal(X.vertices.shape)
                    for k, v in check_m_gamma(model, Z, X, rng).items():
                        worst_m[k] = max(worst_m.get(k, 0.0), v)
                    for k, v in check_a_gamma(model, X, rng).items():
                        worst_a[k] = max(worst_a.get(k, 0.0), v)
            for k, v in worst_m.items():
                add(f"M_gamma d{k} d={d} [{name}]", v, 1e-5)
            for k, v in worst_a.items():
                add(f"A_gamma {k} d={d} [{name}]", v, 1e-5)

    for name, model in model_zoo(2).items():
        worst = {"gradient": 0.0, "hessian": 0.0, "symmetry": 0.0}
        for i in range(instances):
            Xk, X, Y, P = random_step_configuration(rng, sizes[0])
            params = StepParams(tau=0.05, tau_tilde=0.02, lam=0.5)
            # every entry on the first instance, random projections on the rest
            probe = None if i == 0 else 4
            for k, v in check_lagrangian(model, Xk, X, Y, P, params, directions=probe, rng=rng).items():
                worst[k] = max(worst[k], v)
        add(f"grad L [{name}]", worst["gradient"], 1e-6)
        add(f"Hess L [{name}]", worst["hessian"], 1e-4)
        add(f"Hess L symmetry [{name}]", worst["symmetry"], 0.0)
    return results


def random_step_configuration(rng, m: int = 8):
    """A random ``(X^k, X, Y, P)`` on an m-gon with all displacement fields nonzero."""
    Xk = random_polygon(rng, m)
    X = Xk.with_vertices(Xk.vertices + 0.05 * rng.standard_normal(Xk.vertices.shape))
    Y = Xk.with_vertices(X.vertices + 0.05 * rng.standard_normal(Xk.vertices.shape))
    P = 0.5 * rng.standard_normal(Xk.vertices.shape)
    return Xk, X, Y, P
