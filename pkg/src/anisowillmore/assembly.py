"""Discrete anisotropic quadratic form ``M_gamma``, anisotropic area ``A_gamma`` and their derivatives.

Element contributions::

    M_T[Z, X] = S_T(Z) * G_T(X) / (d+1)!,   S_T = sum_i gamma*^2(Z_i)
    A_T[X]    = G_T(X) / d!,                G_T = gamma(R_T[X])

Every derivative family of ``M_T`` is a product of a ``Z``-derivative of
``S_T`` and an ``X``-derivative of ``G_T``, which is how the local blocks are
built below.  Global unknowns are numbered vertex-major, component-minor:
``(d+1) * vertex + component``.

Third derivatives are never stored globally.  ``MGammaDerivatives.dZZZ``,
``dZZX``, ``dZXX`` and ``DerivativeBundle.third`` take a nodal field and
return the matrix left after contracting one slot with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.sparse as sp

from .anisotropy import AnisotropyModel
from .errors import InvalidConfigError, InvalidInputError, NearSingularError, UnsupportedRequestError
from .geometry import SimplicialSurface, element_normal_map

M_FAMILIES = frozenset({"Z", "ZZ", "ZZZ", "X", "XX", "ZX", "ZZX", "ZXX"})


# ---- local kernels ------------------------------------------------------


@dataclass
class _ElementGamma:
    """``G = gamma(R_T)`` and its X-derivatives per element (local dofs ``j*m + s``)."""

    G: np.ndarray  # (E,)
    G1: np.ndarray | None  # (E, L)
    G2: np.ndarray | None  # (E, L, L)
    dRf: np.ndarray  # (E, m, L)
    d2Rf: np.ndarray | None  # (E, m, L, L) or None when R is linear (d=1)
    g2: np.ndarray | None  # gamma Hessian at R, (E, m, m)
    g3: np.ndarray | None  # gamma third tensor at R, (E, m, m, m)

    def third_contract(self, V: np.ndarray) -> np.ndarray:
        """``G'''(., ., V)`` for local directions ``V`` of shape ``(E, L)``."""
        RV = np.einsum("esa,ea->es", self.dRf, V)
        out = np.einsum("evuw,eva,eub,ew->eab", self.g3, self.dRf, self.dRf, RV)
        if self.d2Rf is not None:
            R2V = np.einsum("esab,eb->esa", self.d2Rf, V)
            out += np.einsum("evu,evab,eu->eab", self.g2, self.d2Rf, RV)
            out += np.einsum("evu,eva,eub->eab", self.g2, R2V, self.dRf)
            out += np.einsum("evu,eva,eub->eab", self.g2, self.dRf, R2V)
        return out


def _element_gamma(model: AnisotropyModel, X: SimplicialSurface, order: int) -> _ElementGamma:
    Xbar = X.element_coords()
    E, nn, m = Xbar.shape
    L = nn * m
    normal = element_normal_map(Xbar, order=2 if order >= 2 else 1)
    R = normal.R
    if np.any(np.linalg.norm(R, axis=1) < X.degeneracy_threshold()):
        raise NearSingularError("degenerate element in anisotropic area evaluation")
    G = model.gamma(R)
    if order == 0:
        return _ElementGamma(G, None, None, None, None, None, None)
    g1, g2, g3 = model.gamma_derivatives(R, min(max(order, 1), 3))
    dRf = np.ascontiguousarray(normal.dR).reshape(E, m, L)
    d2Rf = None if X.dim == 1 or order < 2 else np.ascontiguousarray(normal.d2R).reshape(E, m, L, L)
    G1 = np.einsum("es,esa->ea", g1, dRf)
    G2 = None
    if order >= 2:
        G2 = np.einsum("etu,eta,eub->eab", g2, dRf, dRf)
        if d2Rf is not None:
            G2 += np.einsum("et,etab->eab", g1, d2Rf)
    return _ElementGamma(G, G1, G2, dRf, d2Rf, g2, g3)


def _assemble_vector(dofs: np.ndarray, local: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def _assemble_matrix(dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    E, L = dofs.shape
    rows = np.broadcast_to(dofs[:, :, None], (E, L, L)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (E, L, L)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _block_diag_nodes(blocks: np.ndarray) -> np.ndarray:
    """``(E, nn, m, m)`` per-node blocks -> ``(E, nn*m, nn*m)`` block-diagonal local matrices."""
    E, nn, m, _ = blocks.shape
    out = np.zeros((E, nn, m, nn, m))
    for i in range(nn):
        out[:, i, :, i, :] = blocks[:, i]
    return out.reshape(E, nn * m, nn * m)


def _check_field(Z: np.ndarray, X: SimplicialSurface) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != X.vertices.shape:
        raise InvalidInputError(f"nodal field shape {Z.shape} does not match mesh {X.vertices.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("non-finite nodal field")
    return Z


# ---- M_gamma ----------------------------------------------------------------


def m_gamma(model: AnisotropyModel, Z: np.ndarray, X: SimplicialSurface) -> float:
    """``M_gamma[Z, X] = sum_T (sum_i gamma*(Z_i)^2) gamma(R_T) / (d+1)!``."""
    Z = _check_field(Z, X)
    S = model.dual_sq(X.element_coords(Z)).sum(axis=1)
    G = _element_gamma(model, X, 0).G
    return float(S @ G) / factorial(X.dim + 1)


class MGammaDerivatives:
    """Assembled derivative families of ``M_gamma[Z, X]``.

    Attributes ``dZ``, ``dX`` (vectors) and ``dZZ``, ``dXX``, ``dZX`` (sparse;
    ``dZX`` has Z rows and X columns) are filled for the requested families.
    Third-order families are exposed as contractions with a nodal field ``P``
    placed in a ``Z`` slot: :meth:`dZZZ`, :meth:`dZZX`, :meth:`dZXX`.
    """

    def __init__(self, model: AnisotropyModel, Z: np.ndarray, X: SimplicialSurface, request):
        request = frozenset(request)
        unknown = request - M_FAMILIES
        if unknown:
            raise UnsupportedRequestError(f"unsupported derivative families: {sorted(unknown)}")
        Z = _check_field(Z, X)
        self.request = request
        self.mesh = X
        self.n = X.n_dofs
        self.dofs = X.element_dofs()
        self.c = 1.0 / factorial(X.dim + 1)

        zorder = max([len(r) - r.count("X") for r in request] + [0])
        xorder = max([r.count("X") for r in request] + [0])
        Zbar = X.element_coords(Z)
        E, nn, m = Zbar.shape
        self._shape = (E, nn, m)
        self.S = model.dual_sq(Zbar).sum(axis=1)
        if zorder:
            s1, s2, s3 = model.dual_sq_derivatives(Zbar, zorder)
            self.s1 = s1.reshape(E, nn * m)
            self.s2, self.s3 = s2, s3
        self.eg = _element_gamma(model, X, xorder)
        G = self.eg.G
        self.value = self.c * float(self.S @ G)

        c, n, dofs = self.c, self.n, self.dofs
        self.dZ = self.dX = self.dZZ = self.dXX = self.dZX = None
        if "Z" in request:
            self.dZ = _assemble_vector(dofs, c * self.s1 * G[:, None], n)
        if "ZZ" in request:
            self.dZZ = _assemble_matrix(dofs, c * G[:, None, None] * _block_diag_nodes(self.s2), n)
        if "X" in request:
            self.dX = _assemble_vector(dofs, c * self.S[:, None] * self.eg.G1, n)
        if "XX" in request:
            self.dXX = _assemble_matrix(dofs, c * self.S[:, None, None] * self.eg.G2, n)
        if "ZX" in request:
            self.dZX = _assemble_matrix(dofs, c * np.einsum("ea,eb->eab", self.s1, self.eg.G1), n)

    def _need(self, family: str) -> None:
        if family not in self.request:
            raise UnsupportedRequestError(f"derivative family {family!r} was not requested")

    def _local(self, P: np.ndarray) -> np.ndarray:
        P = _check_field(P, self.mesh)
        return self.mesh.element_coords(P)  # (E, nn, m)

    def dZZZ(self, P: np.ndarray) -> sp.csr_matrix:
        """``d^3 M / dZ^3 (P, ., .)``, block diagonal per node."""
        self._need("ZZZ")
        Pl = self._local(P)
        blocks = np.einsum("eirst,eit->eirs", self.s3, Pl)
        local = self.c * self.eg.G[:, None, None] * _block_diag_nodes(blocks)
        return _assemble_matrix(self.dofs, local, self.n)

    def dZZX(self, P: np.ndarray) -> sp.csr_matrix:
        """``d^3 M / dZ dZ dX (P, ., .)`` with Z rows and X columns."""
        self._need("ZZX")
        E, nn, m = self._shape
        Pl = self._local(P)
        s2P = np.einsum("eirs,eis->eir", self.s2, Pl).reshape(E, nn * m)
        local = self.c * np.einsum("ea,eb->eab", s2P, self.eg.G1)
        return _assemble_matrix(self.dofs, local, self.n)

    def dZXX(self, P: np.ndarray) -> sp.csr_matrix:
        """``d^3 M / dZ dX dX (P, ., .)`` on X x X."""
        self._need("ZXX")
        E, nn, m = self._shape
        Pl = self._local(P).reshape(E, nn * m)
        weight = np.einsum("ea,ea->e", self.s1, Pl)
        local = self.c * weight[:, None, None] * self.eg.G2
        return _assemble_matrix(self.dofs, local, self.n)


def m_gamma_derivatives(model: AnisotropyModel, Z: np.ndarray, X: SimplicialSurface, request=M_FAMILIES):
    """Derivative families of ``M_gamma`` named by the differentiated slots, e.g. ``{"Z", "ZX"}``."""
    return MGammaDerivatives(model, Z, X, request)


# ---- A_gamma ----------------------------------------------------------------


@dataclass
class DerivativeBundle:
    """Value, gradient, Hessian and third-derivative contraction of a mesh functional."""

    value: float
    first: np.ndarray | None
    second: sp.csr_matrix | None
    _eg: _ElementGamma | None = None
    _scale: float = 1.0
    _dofs: np.ndarray | None = None
    _mesh: SimplicialSurface | None = None

    def third(self, direction: np.ndarray) -> sp.csr_matrix:
        """Hessian-shaped contraction ``D^3 (., ., direction)``."""
        if self._eg is None or self._eg.g3 is None:
            raise UnsupportedRequestError("third derivative not computed (order < 3)")
        V = self._mesh.element_coords(_check_field(direction, self._mesh)).reshape(len(self._dofs), -1)
        local = self._scale * self._eg.third_contract(V)
        return _assemble_matrix(self._dofs, local, self._mesh.n_dofs)


def a_gamma(model: AnisotropyModel, X: SimplicialSurface) -> float:
    """``A_gamma[X] = sum_T gamma(R_T) / d!``."""
    return float(_element_gamma(model, X, 0).G.sum()) / factorial(X.dim)


def a_gamma_derivatives(model: AnisotropyModel, X: SimplicialSurface, order: int = 2) -> DerivativeBundle:
    if order not in (0, 1, 2, 3):
        raise InvalidInputError(f"order must be between 0 and 3, got {order}")
    eg = _element_gamma(model, X, order)
    scale = 1.0 / factorial(X.dim)
    dofs = X.element_dofs()
    n = X.n_dofs
    first = _assemble_vector(dofs, scale * eg.G1, n) if order >= 1 else None
    second = _assemble_matrix(dofs, scale * eg.G2, n) if order >= 2 else None
    return DerivativeBundle(scale * float(eg.G.sum()), first, second, eg if order >= 3 else None, scale, dofs, X)


# ---- energies ---------------------------------------------------------------


def check_step_sizes(*steps: float) -> None:
    for t in steps:
        if not (np.isfinite(t) and t > 0):
            raise InvalidConfigError(f"time step sizes must be positive, got {t!r}")


def energy_inner(model: AnisotropyModel, X: SimplicialSurface, Y: SimplicialSurface, tau_tilde: float) -> float:
    """``E_in[X, Y] = M_gamma[Y - X, X] + 2 tau~ A_gamma[Y]``."""
    check_step_sizes(tau_tilde)
    return m_gamma(model, Y.vertices - X.vertices, X) + 2.0 * tau_tilde * a_gamma(model, Y)


def energy_outer(
    model: AnisotropyModel,
    Xk: SimplicialSurface,
    X: SimplicialSurface,
    Y: SimplicialSurface,
    tau: float,
    tau_tilde: float,
    lam: float = 0.0,
) -> float:
    """``E_out = M[X - X^k, X^k] + tau/tau~^2 M[Y - X, X] + 2 tau lam A[X]``."""
    check_step_sizes(tau, tau_tilde)
    if not lam >= 0:
        raise InvalidConfigError(f"area weight lambda must be non-negative, got {lam!r}")
    value = m_gamma(model, X.vertices - Xk.vertices, Xk)
    value += tau / tau_tilde**2 * m_gamma(model, Y.vertices - X.vertices, X)
    if lam:
        value += 2.0 * tau * lam * a_gamma(model, X)
    return value


def willmore_energy(model: AnisotropyModel, X: SimplicialSurface, Y: SimplicialSurface, tau_tilde: float) -> float:
    """Discrete Willmore energy ``M[Y - X, X] / (2 tau~^2)`` with ``Y`` the inner step of ``X``."""
    return m_gamma(model, Y.vertices - X.vertices, X) / (2.0 * tau_tilde**2)
