"""Newton solvers for one nested time step and the outer time loop.

A time step is computed as a critical point of the Lagrangian in the joint
unknowns ``(X, Y, P)`` by a damped Newton method; the merit function for the
backtracking line search is ``|grad L|^2 / 2``.  ``solve_inner`` and
``solve_adjoint`` provide the starting point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import AnisotropyModel
from .assembly import (
    a_gamma,
    a_gamma_derivatives,
    check_step_sizes,
    energy_outer,
    m_gamma,
    m_gamma_derivatives,
)
from .errors import InvalidConfigError, NearSingularError, NonconvergenceError, WillmoreError
from .geometry import SimplicialSurface
from .lagrangian import StepParams, lagrangian_gradient, lagrangian_hessian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    tau: float
    tau_tilde: float
    lam: float = 0.0
    steps: int = 1
    newton_rtol: float = 1e-9
    newton_atol: float = 1e-12
    max_newton_iter: int = 50
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 2.0**-30
    theta0: float = 1e-3
    dense_fallback_vertices: int = 512
    continuation_stages: int = 6
    step_rtol: float = 1e-12

    def __post_init__(self):
        check_step_sizes(self.tau, self.tau_tilde)
        if not self.lam >= 0:
            raise InvalidConfigError(f"lambda must be non-negative, got {self.lam!r}")
        if self.steps < 0 or self.max_newton_iter < 1:
            raise InvalidConfigError("steps must be >= 0 and max_newton_iter >= 1")
        for name in ("newton_rtol", "newton_atol", "armijo", "min_step", "step_rtol"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive")
        if not 0 < self.backtrack < 1:
            raise InvalidConfigError("backtrack factor must lie in (0, 1)")
        if self.continuation_stages < 0:
            raise InvalidConfigError("continuation_stages must be non-negative")
        if self.theta0 < 0:
            raise InvalidConfigError("theta0 must be non-negative")

    @property
    def params(self) -> StepParams:
        return StepParams(self.tau, self.tau_tilde, self.lam)


@dataclass
class StepDiagnostics:
    energy_out: float  # E_out[X^k, X^{k+1}, Y[X^{k+1}]]
    energy_out_trivial: float  # E_out[X^k, X^k, Y[X^k]]
    area: float  # A_gamma[X^{k+1}]
    willmore: float  # M[Y - X, X] / (2 tau~^2) at X^{k+1}
    newton_iterations: int
    residual: float
    residual_history: list = field(default_factory=list)
    continuation_stages: int = 0  # nonzero if the step needed the step-size continuation


@dataclass
class StepResult:
    X: SimplicialSurface
    Y: SimplicialSurface
    P: np.ndarray
    diagnostics: StepDiagnostics


@dataclass
class FlowRecord:
    step: int
    time: float
    surface: SimplicialSurface
    diagnostics: StepDiagnostics


@dataclass
class FlowTrajectory:
    records: list[FlowRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i) -> FlowRecord:
        return self.records[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    @property
    def surfaces(self) -> list[SimplicialSurface]:
        return [r.surface for r in self.records]

    @property
    def final(self) -> SimplicialSurface:
        return self.records[-1].surface


# ---- linear algebra -------------------------------------------------------


def solve_symmetric(A: sp.spmatrix, b: np.ndarray, dense_limit: int = 0) -> np.ndarray:
    """Direct solve of a symmetric (possibly indefinite) sparse system.

    Uses a sparse LU factorization; if that fails and the system has at most
    ``dense_limit`` rows, a dense Bunch-Kaufman solve is attempted.
    """
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
        if np.all(np.isfinite(x)):
            return x
        pivot = float(np.min(np.abs(lu.U.diagonal())))
    except RuntimeError:
        pivot = 0.0
    if A.shape[0] <= dense_limit:
        try:
            x = scipy.linalg.solve(A.toarray(), b, assume_a="sym")
            if np.all(np.isfinite(x)):
                return x
        except (scipy.linalg.LinAlgError, ValueError):
            pass
    raise NearSingularError(f"singular linear system (smallest pivot {pivot:.3e})")


def _tolerance(r0: float, config: SolverConfig) -> float:
    return max(config.newton_rtol * r0, config.newton_atol)


def _roundoff_floor(K: sp.spmatrix, u: np.ndarray) -> float:
    """Residual level below which the gradient is dominated by rounding errors."""
    row_sums = abs(K).sum(axis=1)
    return 16.0 * np.finfo(float).eps * float(np.max(row_sums)) * (1.0 + float(np.max(np.abs(u))))


def _line_search(u, d, merit0, trial_merit, config: SolverConfig):
    """Backtracking on the merit ``|g|^2 / 2``; returns (alpha, u_new) or raises."""
    alpha = 1.0
    while alpha >= config.min_step:
        u_new = u + alpha * d
        try:
            m = trial_merit(u_new)
        except (NearSingularError, FloatingPointError):
            m = np.inf
        if np.isfinite(m) and m <= (1.0 - 2.0 * config.armijo * alpha) * merit0:
            return alpha, u_new
        alpha *= config.backtrack
    return None, u


# ---- inner problem and adjoint ---------------------------------------------


def _inner_gradient(model, X, Y, tau_tilde):
    M = m_gamma_derivatives(model, Y.vertices - X.vertices, X, {"Z"})
    A = a_gamma_derivatives(model, Y, 1)
    return M.dZ + 2.0 * tau_tilde * A.first


def solve_inner(
    model: AnisotropyModel,
    X: SimplicialSurface,
    tau_tilde: float,
    config: SolverConfig,
    Y0: SimplicialSurface | None = None,
) -> SimplicialSurface:
    """Minimize ``E_in[X, .]``: one implicit step of anisotropic curvature motion from ``X``."""
    check_step_sizes(tau_tilde)
    X.check_nondegenerate()
    Y = X if Y0 is None else Y0
    n_v = X.n_vertices

    def merit(y):
        g = _inner_gradient(model, X, X.with_vertices(y), tau_tilde)
        return 0.5 * float(g @ g)

    history = []
    tol = None
    for it in range(config.max_newton_iter + 1):
        M = m_gamma_derivatives(model, Y.vertices - X.vertices, X, {"Z", "ZZ"})
        A = a_gamma_derivatives(model, Y, 2)
        g = M.dZ + 2.0 * tau_tilde * A.first
        r = float(np.max(np.abs(g)))
        history.append(r)
        if tol is None:
            tol = _tolerance(r, config)
        H = M.dZZ + 2.0 * tau_tilde * A.second
        if r <= max(tol, _roundoff_floor(H, Y.vertices)):
            return Y
        if it == config.max_newton_iter:
            break
        d = solve_symmetric(H, -g, dense_limit=2 * config.dense_fallback_vertices)
        if np.max(np.abs(d)) <= config.step_rtol * (1.0 + np.max(np.abs(Y.vertices))):
            return Y
        alpha, y = _line_search(Y.vertices.ravel(), d, 0.5 * float(g @ g), merit, config)
        if alpha is None:
            break
        Y = X.with_vertices(y.reshape(n_v, -1))
    raise NonconvergenceError(f"inner problem did not converge (residual {history[-1]:.3e})", history)


def solve_adjoint(
    model: AnisotropyModel, X: SimplicialSurface, Y: SimplicialSurface, tau: float, tau_tilde: float
) -> np.ndarray:
    """Multiplier ``P`` from ``d2E_in/dY2 [X, Y] P = dE_out/dY``.

    ``tau = 0`` is allowed here and yields ``P = 0``.
    """
    check_step_sizes(tau_tilde)
    if tau < 0:
        raise InvalidConfigError("tau must be non-negative")
    M = m_gamma_derivatives(model, Y.vertices - X.vertices, X, {"Z", "ZZ"})
    A = a_gamma_derivatives(model, Y, 2)
    H = M.dZZ + 2.0 * tau_tilde * A.second
    rhs = tau / tau_tilde**2 * M.dZ
    if not np.any(rhs):
        return np.zeros_like(X.vertices)
    p = solve_symmetric(H, rhs)
    return p.reshape(X.vertices.shape)


# ---- one time step ----------------------------------------------------------


def _split(u: np.ndarray, shape):
    n = int(np.prod(shape))
    return u[:n].reshape(shape), u[n : 2 * n].reshape(shape), u[2 * n :].reshape(shape)


def _kkt_newton(model, Xk, u, params, config, tol=None):
    """Damped Newton on ``grad L = 0`` from the packed iterate ``u = (X, Y, P)``.

    Returns ``(u, history)``; ``tol`` defaults to the relative tolerance of
    the first residual.
    """
    shape = Xk.vertices.shape

    def unpack(v):
        x, y, p = _split(v, shape)
        X, Y = Xk.with_vertices(x), Xk.with_vertices(y)
        if not (X.is_nondegenerate() and Y.is_nondegenerate()):
            raise NearSingularError("degenerate trial mesh")
        return X, Y, p

    def merit(v):
        g = np.concatenate(lagrangian_gradient(model, Xk, *unpack(v), params))
        return 0.5 * float(g @ g)

    history = []
    limit = 6 * config.dense_fallback_vertices
    for it in range(config.max_newton_iter + 1):
        kkt = lagrangian_hessian(model, Xk, *unpack(u), params)
        g = kkt.gradient
        K = kkt.matrix()
        r = float(np.max(np.abs(g)))
        history.append(r)
        if tol is None:
            tol = _tolerance(r, config)
        if r <= max(tol, _roundoff_floor(K, u)):
            return u, history
        if it == config.max_newton_iter:
            break
        d = solve_symmetric(K, -g, dense_limit=limit)
        if np.max(np.abs(d)) <= config.step_rtol * (1.0 + np.max(np.abs(u))):
            # the correction is at round-off level; the residual cannot drop further
            return u, history
        alpha, u = _line_search(u, d, 0.5 * float(g @ g), merit, config)
        if alpha is None:
            raise NonconvergenceError(f"line search failed at residual {r:.3e} (tol {tol:.3e})", history)
    raise NonconvergenceError(
        f"Newton did not converge in {config.max_newton_iter} iterations (residual {r:.3e}, tol {tol:.3e})", history
    )


def _initial_guess(model, Xk, Yk, tau, config):
    X0 = Xk.with_vertices(Xk.vertices + config.theta0 * (Yk.vertices - Xk.vertices))
    Y0 = solve_inner(model, X0, config.tau_tilde, config, Y0=X0.with_vertices(X0.vertices + Yk.vertices - Xk.vertices))
    P0 = solve_adjoint(model, X0, Y0, tau, config.tau_tilde)
    return np.concatenate([X0.vertices.ravel(), Y0.vertices.ravel(), P0.ravel()])


def _continuation(model, Xk, Yk, config, tol):
    """Reach ``tau`` through the ladder ``tau / 2^j``, each stage started from the previous one."""
    taus = config.tau * 0.5 ** np.arange(config.continuation_stages, -1, -1)
    u = _initial_guess(model, Xk, Yk, taus[0], config)
    n = Xk.n_dofs
    history = []
    for t in taus:
        params = StepParams(float(t), config.tau_tilde, config.lam)
        X, Y = Xk.with_vertices(u[:n]), Xk.with_vertices(u[n : 2 * n])
        u[2 * n :] = solve_adjoint(model, X, Y, float(t), config.tau_tilde).ravel()
        u, h = _kkt_newton(model, Xk, u, params, config, tol=tol)
        history.extend(h)
    return u, history


def time_step(
    model: AnisotropyModel,
    Xk: SimplicialSurface,
    config: SolverConfig,
    Yk: SimplicialSurface | None = None,
) -> StepResult:
    """Advance one step of the nested scheme.

    ``Yk`` (the inner step of ``Xk``) is recomputed when not supplied.  If the
    Newton iteration started near ``X^k`` fails and
    ``config.continuation_stages > 0``, the step is retried by continuation
    in the step size.
    """
    params = config.params
    Xk.check_nondegenerate()
    if Yk is None:
        Yk = solve_inner(model, Xk, config.tau_tilde, config)
    trivial = energy_outer(model, Xk, Xk, Yk, config.tau, config.tau_tilde, config.lam)

    u = _initial_guess(model, Xk, Yk, config.tau, config)
    stages = 0
    try:
        u, history = _kkt_newton(model, Xk, u, params, config)
    except (NonconvergenceError, NearSingularError) as exc:
        if not config.continuation_stages:
            raise
        direct = list(getattr(exc, "residuals", ()))
        tol = _tolerance(direct[0], config) if direct else None
        logger.debug("direct Newton failed (%s); retrying by continuation", exc)
        u, history = _continuation(model, Xk, Yk, config, tol)
        history = direct + history
        stages = config.continuation_stages

    x, y, p = _split(u, Xk.vertices.shape)
    X, Y = Xk.with_vertices(x), Xk.with_vertices(y)
    diag = StepDiagnostics(
        energy_out=energy_outer(model, Xk, X, Y, config.tau, config.tau_tilde, config.lam),
        energy_out_trivial=trivial,
        area=a_gamma(model, X),
        willmore=m_gamma(model, Y.vertices - X.vertices, X) / (2.0 * config.tau_tilde**2),
        newton_iterations=len(history) - 1,
        residual=history[-1],
        residual_history=history,
        continuation_stages=stages,
    )
    return StepResult(X, Y, p, diag)


def run_flow(
    model: AnisotropyModel,
    surface: SimplicialSurface,
    config: SolverConfig,
    callback=None,
) -> FlowTrajectory:
    """``config.steps`` successive time steps from ``surface``.

    ``callback(record)`` is invoked after every recorded step (including step 0).
    """
    surface.check_nondegenerate()
    Y = solve_inner(model, surface, config.tau_tilde, config)
    trivial = energy_outer(model, surface, surface, Y, config.tau, config.tau_tilde, config.lam)
    diag0 = StepDiagnostics(
        energy_out=trivial,
        energy_out_trivial=trivial,
        area=a_gamma(model, surface),
        willmore=m_gamma(model, Y.vertices - surface.vertices, surface) / (2.0 * config.tau_tilde**2),
        newton_iterations=0,
        residual=0.0,
    )
    traj = FlowTrajectory([FlowRecord(0, 0.0, surface, diag0)])
    if callback:
        callback(traj.records[-1])
    X = surface
    for k in range(1, config.steps + 1):
        try:
            res = time_step(model, X, config, Yk=Y)
        except WillmoreError as exc:
            exc.args = (f"step {k}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            exc.step = k
            raise
        X, Y = res.X, res.Y
        logger.debug("step %d: %d Newton iterations, residual %.2e", k, res.diagnostics.newton_iterations, res.diagnostics.residual)
        traj.records.append(FlowRecord(k, k * config.tau, X, res.diagnostics))
        if callback:
            callback(traj.records[-1])
    return traj
