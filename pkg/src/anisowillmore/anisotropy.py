"""Anisotropy functions, their squared duals, and derivatives up to third order.

Every anisotropy used here is a weighted sum of square roots of quadratic
forms, ``sum_k w_k sqrt(p . A_k p)``.  That covers the Euclidean norm, the
elliptic anisotropies, the regularized l1 / l-infinity norms and the
``sum_k sqrt(p . G_k p)`` family, so one closed-form derivative kernel
serves all of them.

Points are numpy arrays with the component axis last; all evaluations are
vectorized over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NearSingularError, UnsupportedRequestError

DEFAULT_DELTA0 = 1e-10


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("non-finite input to anisotropy evaluation")
    return p


@dataclass(frozen=True, eq=False)
class RootSum:
    """``f(p) = sum_k w_k sqrt(p . A_k p)`` with symmetric positive (semi)definite ``A_k``."""

    weights: np.ndarray  # (K,)
    mats: np.ndarray  # (K, m, m)

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]

    def value(self, p: np.ndarray) -> np.ndarray:
        q = np.einsum("...i,kij,...j->...k", p, self.mats, p)
        return np.sqrt(q) @ self.weights

    def derivatives(self, p: np.ndarray, order: int):
        """Return ``(value, grad, hess, third)``; entries above ``order`` are None."""
        a = np.einsum("kij,...j->...ki", self.mats, p)  # (..., K, m)
        f = np.sqrt(np.einsum("...ki,...i->...k", a, p))  # (..., K)
        w = self.weights
        val = f @ w
        grad = np.einsum("k,...ki->...i", w, a / f[..., None])
        hess = third = None
        if order >= 2:
            f3 = f**3
            hess = np.einsum("k,kij,...k->...ij", w, self.mats, 1.0 / f) - np.einsum(
                "k,...ki,...kj->...ij", w, a, a / f3[..., None]
            )
        if order >= 3:
            f5 = f**5
            A = self.mats
            af3 = a / f3[..., None]
            t = -np.einsum("k,kij,...kl->...ijl", w, A, af3)
            t -= np.einsum("k,kil,...kj->...ijl", w, A, af3)
            t -= np.einsum("k,kjl,...ki->...ijl", w, A, af3)
            t += 3.0 * np.einsum("k,...ki,...kj,...kl->...ijl", w, a, a, a / f5[..., None])
            third = t
        return val, grad, hess, third


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """``s(z) = z . B z``: the squared dual of an elliptic anisotropy, smooth everywhere."""

    mat: np.ndarray

    def value(self, z: np.ndarray) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", z, self.mat, z)

    def derivatives(self, z: np.ndarray, order: int):
        val = self.value(z)
        grad = 2.0 * z @ self.mat.T
        m = self.mat.shape[0]
        shape = z.shape[:-1]
        hess = np.broadcast_to(2.0 * self.mat, shape + (m, m)).copy() if order >= 2 else None
        third = np.zeros(shape + (m, m, m)) if order >= 3 else None
        return val, grad, hess, third


@dataclass(frozen=True, eq=False)
class AnisotropyModel:
    """Anisotropy ``gamma`` together with its squared dual ``gamma*^2``.

    Build instances through the constructors :meth:`isotropic`,
    :meth:`elliptic`, :meth:`reg_l1`, :meth:`reg_linf` and :meth:`quad_sum`.
    """

    kind: str
    params: tuple
    primal: RootSum
    dual: RootSum | QuadraticForm | None
    delta0: float = DEFAULT_DELTA0
    _fallback_c: float = field(default=0.0, repr=False)

    # ---- constructors -------------------------------------------------

    @classmethod
    def isotropic(cls, dim: int = 2, delta0: float = DEFAULT_DELTA0) -> AnisotropyModel:
        eye = np.eye(dim)
        return cls("isotropic", (), RootSum(np.ones(1), eye[None]), QuadraticForm(eye), delta0)

    @classmethod
    def elliptic(cls, *axes: float, delta0: float = DEFAULT_DELTA0) -> AnisotropyModel:
        """``gamma(p) = sqrt(sum_l a_l^2 p_l^2)``; its Wulff shape has half axes ``a_l``."""
        a = np.asarray(axes, dtype=float)
        if a.ndim != 1 or a.size < 2 or np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise InvalidInputError(f"elliptic axes must be positive, got {axes!r}")
        primal = RootSum(np.ones(1), np.diag(a**2)[None])
        return cls("elliptic", tuple(a.tolist()), primal, QuadraticForm(np.diag(1.0 / a**2)), delta0)

    @classmethod
    def reg_l1(cls, eps: float, delta0: float = DEFAULT_DELTA0) -> AnisotropyModel:
        """Regularized l1 norm; its squared dual is the regularized l-infinity norm squared."""
        _check_eps(eps)
        model = cls("reg_l1", (float(eps),), _l1_eps(eps), _linf_eps(eps), delta0)
        return model._with_fallback()

    @classmethod
    def reg_linf(cls, eps: float, delta0: float = DEFAULT_DELTA0) -> AnisotropyModel:
        """Regularized l-infinity norm; its squared dual is the regularized l1 norm squared."""
        _check_eps(eps)
        model = cls("reg_linf", (float(eps),), _linf_eps(eps), _l1_eps(eps), delta0)
        return model._with_fallback()

    @classmethod
    def quad_sum(
        cls, mats, dual: AnisotropyModel | None = None, delta0: float = DEFAULT_DELTA0
    ) -> AnisotropyModel:
        """``gamma(p) = sum_k sqrt(p . G_k p)``.

        There is no closed-form dual; pass ``dual`` (a model whose squared dual
        is used) if the squared dual is needed.
        """
        G = np.asarray(mats, dtype=float)
        if G.ndim == 2:
            G = G[None]
        if not np.allclose(G, np.swapaxes(G, -1, -2)):
            raise InvalidInputError("quad_sum matrices must be symmetric")
        if np.any(np.linalg.eigvalsh(G) <= 0):
            raise InvalidInputError("quad_sum matrices must be positive definite")
        model = cls(
            "quad_sum", (G.tolist(),), RootSum(np.ones(len(G)), G), None if dual is None else dual.dual, delta0
        )
        return model._with_fallback() if isinstance(model.dual, RootSum) else model

    def _with_fallback(self) -> AnisotropyModel:
        m = self.dim
        c = float(np.mean(self.dual.value(np.eye(m)) ** 2))
        object.__setattr__(self, "_fallback_c", c)
        return self

    @property
    def dim(self) -> int:
        return self.primal.dim

    # ---- primal -------------------------------------------------------

    def gamma(self, p) -> np.ndarray:
        return self.primal.value(_as_points(p))

    def gamma_derivatives(self, p, order: int = 1):
        """Gradient, Hessian and third-derivative tensor of ``gamma`` (filled up to ``order``)."""
        p = _as_points(p)
        if order not in (1, 2, 3):
            raise InvalidInputError(f"order must be 1, 2 or 3, got {order}")
        if np.any(np.linalg.norm(p, axis=-1) < self.delta0):
            raise NearSingularError("gamma derivatives requested at a (near) zero vector")
        _, g, h, t = self.primal.derivatives(p, order)
        return g, h, t

    # ---- dual ---------------------------------------------------------

    def _require_dual(self):
        if self.dual is None:
            raise UnsupportedRequestError(f"{self.kind} anisotropy has no dual model attached")
        return self.dual

    def dual_norm(self, z) -> np.ndarray:
        """``gamma*(z)``."""
        return np.sqrt(self.dual_sq(z))

    def dual_sq(self, z) -> np.ndarray:
        """``gamma*(z)^2``."""
        dual = self._require_dual()
        z = _as_points(z)
        if isinstance(dual, QuadraticForm):
            return dual.value(z)
        return dual.value(z) ** 2

    def dual_sq_derivatives(self, z, order: int = 1):
        """Gradient, Hessian and third tensor of ``gamma*^2``.

        For root-sum duals, points with ``|z| < delta0`` use the quadratic
        surrogate ``c |z|^2`` instead of the (unbounded) exact derivatives.
        """
        dual = self._require_dual()
        z = _as_points(z)
        if order not in (1, 2, 3):
            raise InvalidInputError(f"order must be 1, 2 or 3, got {order}")
        if isinstance(dual, QuadraticForm):
            _, g, h, t = dual.derivatives(z, order)
            return g, h, t

        m = z.shape[-1]
        small = np.linalg.norm(z, axis=-1) < self.delta0
        zs = np.where(small[..., None], 1.0, z)  # safe evaluation point for masked entries
        f, f1, f2, f3 = dual.derivatives(zs, order)
        g = 2.0 * f[..., None] * f1
        h = t = None
        if order >= 2:
            h = 2.0 * (f1[..., :, None] * f1[..., None, :] + f[..., None, None] * f2)
        if order >= 3:
            t = 2.0 * (
                np.einsum("...i,...jk->...ijk", f1, f2)
                + np.einsum("...j,...ik->...ijk", f1, f2)
                + np.einsum("...k,...ij->...ijk", f1, f2)
                + f[..., None, None, None] * f3
            )
        if np.any(small):
            c = self._fallback_c
            g = np.where(small[..., None], 2.0 * c * z, g)
            if h is not None:
                h = np.where(small[..., None, None], 2.0 * c * np.eye(m), h)
            if t is not None:
                t = np.where(small[..., None, None, None], 0.0, t)
        return g, h, t

    # ---- duality map --------------------------------------------------

    def duality_map(self, z) -> np.ndarray:
        """``T(z) = gamma*(z) grad gamma*(z) = grad(gamma*^2)(z) / 2``."""
        z = _as_points(z)
        if np.any(np.linalg.norm(z, axis=-1) < self.delta0):
            raise NearSingularError("duality map evaluated at a (near) zero vector")
        g, _, _ = self.dual_sq_derivatives(z, 1)
        return 0.5 * g

    def duality_map_inverse(self, xi) -> np.ndarray:
        """``T^{-1}(xi) = gamma(xi) grad gamma(xi)``."""
        xi = _as_points(xi)
        (g, _, _) = self.gamma_derivatives(xi, 1)
        return self.gamma(xi)[..., None] * g


def _check_eps(eps: float) -> None:
    if not (np.isfinite(eps) and eps > 0):
        raise InvalidInputError(f"regularization eps must be positive, got {eps!r}")


def _l1_eps(eps: float) -> RootSum:
    eye = np.eye(2)
    mats = np.stack([eps * eye + np.outer(e, e) for e in eye])
    return RootSum(np.ones(2), mats)


def _linf_eps(eps: float) -> RootSum:
    eye = np.eye(2)
    dirs = [np.array([1.0, 1.0]), np.array([1.0, -1.0])]
    mats = np.stack([eps * eye + np.outer(v, v) for v in dirs])
    return RootSum(np.full(2, 0.5), mats)


def unit_directions(m: int, phase: float = 0.0) -> np.ndarray:
    theta = phase + 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def wulff_sample(
    model: AnisotropyModel, R: float, m: int, spacing: str = "angle", phase: float = 0.0
) -> np.ndarray:
    """Vertices ``R * grad gamma(nu_i)`` on the boundary of the scaled Wulff shape.

    ``spacing="angle"`` uses normals at equally spaced angles ``2 pi (i + phase) / m``.
    ``spacing="arclength"`` places the vertices equidistantly along the
    boundary curve, vertex ``i`` at arclength ``(i + phase) / m`` of the
    perimeter measured from the point with normal ``(1, 0)``; this is what
    strongly anisotropic shapes need for a usable mesh.  For nearly
    crystalline shapes ``phase=0.5`` keeps vertices off the corners.
    ``spacing="parameter"`` (elliptic and isotropic models only) gives
    ``R (a1 cos s, a2 sin s)`` at equally spaced ``s``, the affine image of a
    regular polygon.
    """
    if m < 3:
        raise InvalidInputError("a closed polygon needs at least 3 vertices")
    if model.dim != 2:
        raise InvalidInputError("wulff_sample is defined for planar curves")
    if not 0.0 <= phase < 1.0:
        raise InvalidInputError(f"phase must lie in [0, 1), got {phase!r}")
    if spacing == "angle":
        nu = unit_directions(m, 2.0 * np.pi * phase / m)
    elif spacing == "arclength":
        nu = _arclength_normals(model, m, phase)
    elif spacing == "parameter":
        if model.kind not in ("elliptic", "isotropic"):
            raise InvalidInputError("parameter spacing needs an elliptic or isotropic model")
        axes = np.asarray(model.params if model.kind == "elliptic" else (1.0, 1.0), dtype=float)
        nu = unit_directions(m, 2.0 * np.pi * phase / m) / axes
        nu /= np.linalg.norm(nu, axis=1)[:, None]
    else:
        raise InvalidInputError(f"unknown spacing {spacing!r}")
    g, _, _ = model.gamma_derivatives(nu, 1)
    return R * g


def _arclength_normals(model: AnisotropyModel, m: int, phase: float = 0.0, resolution: int = 1 << 16) -> np.ndarray:
    n_fine = max(resolution, 64 * m)
    theta = 2.0 * np.pi * np.arange(n_fine + 1) / n_fine
    nu = np.column_stack([np.cos(theta), np.sin(theta)])
    _, h, _ = model.gamma_derivatives(nu, 2)
    tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
    speed = np.linalg.norm(np.einsum("nij,nj->ni", h, tangent), axis=1)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(theta))])
    targets = s[-1] * (np.arange(m) + phase) / m
    th = np.interp(targets, s, theta)
    return np.column_stack([np.cos(th), np.sin(th)])


def wulff_perimeter(model: AnisotropyModel, R: float = 1.0, resolution: int = 1 << 16) -> float:
    """Euclidean length of the boundary of ``R`` times the Wulff shape."""
    theta = 2.0 * np.pi * np.arange(resolution) / resolution
    nu = np.column_stack([np.cos(theta), np.sin(theta)])
    _, h, _ = model.gamma_derivatives(nu, 2)
    tangent = np.column_stack([-np.sin(theta), np.cos(theta)])
    speed = np.linalg.norm(np.einsum("nij,nj->ni", h, tangent), axis=1)
    return float(R * speed.mean() * 2.0 * np.pi)
