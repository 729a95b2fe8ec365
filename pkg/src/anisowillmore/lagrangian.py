"""Lagrangian of the nested time step and its gradient / Hessian.

    L[X, Y, P] = E_out[X^k, X, Y] - dE_in/dY[X, Y](P)

with ``E_out = M[X - X^k, X^k] + c M[Y - X, X] + 2 tau lam A[X]`` (``c = tau / tau~^2``)
and ``E_in = M[Y - X, X] + 2 tau~ A[Y]``.  Inside ``M[Y - X, X]`` the field
``Z = Y - X`` depends on both unknowns, so ``d/dY = d/dZ`` and
``d/dX = d/dX - d/dZ``; all blocks below follow from that chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .anisotropy import AnisotropyModel
from .assembly import a_gamma_derivatives, check_step_sizes, m_gamma, m_gamma_derivatives
from .errors import InvalidConfigError
from .geometry import SimplicialSurface


@dataclass(frozen=True)
class StepParams:
    tau: float
    tau_tilde: float
    lam: float = 0.0

    def __post_init__(self):
        check_step_sizes(self.tau, self.tau_tilde)
        if not self.lam >= 0:
            raise InvalidConfigError(f"area weight lambda must be non-negative, got {self.lam!r}")

    @property
    def c(self) -> float:
        return self.tau / self.tau_tilde**2


@dataclass
class KktSystem:
    """Gradient blocks and symmetric Hessian blocks in the unknown order (X, Y, P)."""

    g_X: np.ndarray
    g_Y: np.ndarray
    g_P: np.ndarray
    H_XX: sp.csr_matrix
    H_XY: sp.csr_matrix
    H_XP: sp.csr_matrix
    H_YY: sp.csr_matrix
    H_YP: sp.csr_matrix

    @property
    def n(self) -> int:
        return len(self.g_X)

    @property
    def gradient(self) -> np.ndarray:
        return np.concatenate([self.g_X, self.g_Y, self.g_P])

    @property
    def H_PP(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.n, self.n))

    def matrix(self) -> sp.csr_matrix:
        B = [
            [self.H_XX, self.H_XY, self.H_XP],
            [self.H_XY.T, self.H_YY, self.H_YP],
            [self.H_XP.T, self.H_YP.T, None],
        ]
        return sp.bmat(B, format="csr")

    def dump(self, path) -> None:
        """Write the KKT matrix as ``row col value`` lines (coordinate format)."""
        K = self.matrix().tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {K.shape[0]} {K.shape[1]} {K.nnz}\n")
            for r, c, v in zip(K.row, K.col, K.data):
                fh.write(f"{r} {c} {v!r}\n")


def _sym(A: sp.spmatrix) -> sp.csr_matrix:
    return (0.5 * (A + A.T)).tocsr()


def lagrangian_value(
    model: AnisotropyModel,
    Xk: SimplicialSurface,
    X: SimplicialSurface,
    Y: SimplicialSurface,
    P: np.ndarray,
    params: StepParams,
) -> float:
    Z = Y.vertices - X.vertices
    value = m_gamma(model, X.vertices - Xk.vertices, Xk) + params.c * m_gamma(model, Z, X)
    if params.lam:
        value += 2.0 * params.tau * params.lam * a_gamma_derivatives(model, X, 0).value
    dM = m_gamma_derivatives(model, Z, X, {"Z"})
    dA = a_gamma_derivatives(model, Y, 1)
    P = np.asarray(P, dtype=float).ravel()
    return value - float(dM.dZ @ P) - 2.0 * params.tau_tilde * float(dA.first @ P)


def _pieces(model, Xk, X, Y, P, params, hessian: bool):
    fam = {"Z", "X", "ZZ", "ZX"} | ({"XX", "ZZZ", "ZZX", "ZXX"} if hessian else set())
    Mk = m_gamma_derivatives(model, X.vertices - Xk.vertices, Xk, {"Z", "ZZ"} if hessian else {"Z"})
    M = m_gamma_derivatives(model, Y.vertices - X.vertices, X, fam)
    AY = a_gamma_derivatives(model, Y, 3 if hessian else 2)
    AX = a_gamma_derivatives(model, X, 2 if hessian else 1) if params.lam else None
    return Mk, M, AY, AX


def _gradient_from(Mk, M, AY, AX, P, params):
    c, tt = params.c, params.tau_tilde
    p = np.asarray(P, dtype=float).ravel()
    MZZp = M.dZZ @ p
    g_X = Mk.dZ + c * (M.dX - M.dZ) - (M.dZX.T @ p - MZZp)
    if AX is not None:
        g_X = g_X + 2.0 * params.tau * params.lam * AX.first
    g_Y = c * M.dZ - MZZp - 2.0 * tt * (AY.second @ p)
    g_P = -(M.dZ + 2.0 * tt * AY.first)
    return g_X, g_Y, g_P


def lagrangian_gradient(model, Xk, X, Y, P, params: StepParams):
    """Gradient blocks ``(dL/dX, dL/dY, dL/dP)`` as flat arrays."""
    Mk, M, AY, AX = _pieces(model, Xk, X, Y, P, params, hessian=False)
    return _gradient_from(Mk, M, AY, AX, P, params)


def lagrangian_hessian(model, Xk, X, Y, P, params: StepParams) -> KktSystem:
    """Gradient and Hessian of the Lagrangian, third-order terms contracted with ``P``."""
    Mk, M, AY, AX = _pieces(model, Xk, X, Y, P, params, hessian=True)
    g_X, g_Y, g_P = _gradient_from(Mk, M, AY, AX, P, params)
    c, tt = params.c, params.tau_tilde

    MZZZ = M.dZZZ(P)  # Z x Z
    MZZX = M.dZZX(P)  # Z x X
    MZXX = M.dZXX(P)  # X x X
    MXZ = M.dZX.T.tocsr()

    # Hessian of Q = dM/dZ[Y - X, X](P) in (X, Y)
    Q_XX = MZZZ - MZZX - MZZX.T + MZXX
    Q_XY = (MZZX - MZZZ).T

    H_XX = Mk.dZZ + c * (M.dXX - M.dZX - MXZ + M.dZZ) - Q_XX
    if AX is not None:
        H_XX = H_XX + 2.0 * params.tau * params.lam * AX.second
    H_XY = c * (MXZ - M.dZZ) - Q_XY
    H_XP = M.dZZ - MXZ
    H_YY = c * M.dZZ - MZZZ - 2.0 * tt * AY.third(P)
    H_YP = -(M.dZZ + 2.0 * tt * AY.second)
    return KktSystem(g_X, g_Y, g_P, _sym(H_XX), H_XY.tocsr(), H_XP.tocsr(), _sym(H_YY), _sym(H_YP))
