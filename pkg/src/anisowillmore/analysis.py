"""Self-similar Wulff-shape reference solutions, the L2 error metric, EOC tables and energy reports."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anisotropy import AnisotropyModel, wulff_perimeter, wulff_sample
from .errors import InvalidConfigError, InvalidInputError, WillmoreError
from .geometry import SimplicialSurface, enclosed_area, lumped_weights, mesh_size, vertex_normals
from .solver import FlowTrajectory, SolverConfig, run_flow


def exact_wulff_radius(R0: float, t: float) -> float:
    """Radius of the self-similarly expanding Wulff shape, ``(R0^4 + 2 t)^(1/4)``."""
    if not R0 > 0 or not t >= 0:
        raise InvalidInputError("need R0 > 0 and t >= 0")
    return (R0**4 + 2.0 * t) ** 0.25


def discrete_wulff_recursion(R_prev: float, tau: float, tau_tilde: float = 0.0, tol: float = 1e-14):
    """Radii ``(R, R~)`` after one time step of a Wulff shape of radius ``R_prev``.

    ``R`` is the root ``> R_prev`` of ``2 R_prev R^2 (R - R_prev) = tau``, found
    by bisection on ``R - R_prev``; ``R~ = R - tau~ / R`` is the radius of the inner step.
    """
    if not R_prev > 0:
        raise InvalidConfigError("R_prev must be positive")
    if tau < 0 or tau_tilde < 0:
        raise InvalidConfigError("step sizes must be non-negative")
    if tau == 0:
        return R_prev, R_prev - tau_tilde / R_prev

    # bisect on the increment d = R - R_prev to keep its relative accuracy
    def f(d):
        return 2.0 * R_prev * (R_prev + d) ** 2 * d - tau

    lo, hi = 0.0, tau / (2.0 * R_prev**3)  # f(hi) >= 0 since R_prev + hi >= R_prev
    if not math.isfinite(hi):
        raise InvalidConfigError(f"no bracketing root for R_prev={R_prev!r}, tau={tau!r}")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    R = R_prev + 0.5 * (lo + hi)
    return R, R - tau_tilde / R


def projected_l2_error(model: AnisotropyModel, surface: SimplicialSurface, R_exact: float) -> float:
    """Lumped L2 distance between a polygon and the Wulff shape of radius ``R_exact``.

    Each vertex is compared with ``R_exact * grad gamma(nu_i)``, the point of
    the exact curve in the direction of its discrete normal.
    """
    nu = vertex_normals(surface)
    g, _, _ = model.gamma_derivatives(nu, 1)
    diff = surface.vertices - R_exact * g
    w = lumped_weights(surface)
    return float(np.sqrt(np.sum(w * np.sum(diff * diff, axis=1))))


def eoc(errors, hs) -> list[float]:
    """Experimental orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.ndim != 1 or len(e) < 2:
        raise InvalidInputError("need two equally long sequences with at least two entries")
    if np.any(e <= 0) or np.any(h <= 0):
        raise InvalidInputError("errors and mesh sizes must be positive")
    if np.any(h[1:] == h[:-1]):
        raise InvalidInputError("consecutive mesh sizes must differ")
    return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))


# ---- convergence studies ----------------------------------------------------


@dataclass
class StudyRow:
    n: int
    h0: float
    h_t: float
    error: float
    eoc: float | None = None
    steps: int = 0
    tau: float = 0.0
    max_newton_iterations: int = 0
    max_energy_increase: float = 0.0  # max over steps of E_out(new) - E_out(trivial)


@dataclass
class ConvergenceStudy:
    t_final: float
    law: str  # "h0" or "h0^2"
    rows: list[StudyRow] = field(default_factory=list)

    def __post_init__(self):
        self.fill_eoc()

    def fill_eoc(self) -> None:
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidInputError("study rows must have strictly increasing n")
        for r in self.rows:
            r.eoc = None
        if len(self.rows) >= 2:
            vals = eoc([r.error for r in self.rows], [r.h_t for r in self.rows])
            for r, v in zip(self.rows[1:], vals):
                r.eoc = float(v)

    @property
    def eocs(self) -> list[float]:
        return [r.eoc for r in self.rows[1:]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "h0", "h_t", "error", "eoc"])
        for r in self.rows:
            w.writerow([r.n, f"{r.h0:.10e}", f"{r.h_t:.10e}", f"{r.error:.10e}", "" if r.eoc is None else f"{r.eoc:.6f}"])
        return buf.getvalue()


@dataclass(frozen=True)
class StudySpec:
    """One convergence study: Wulff polygons with ``2^n`` vertices flowed to ``t_final``.

    ``h0 = reference_length / 2^n``; the step sizes follow ``tau = tau~ = h0^power``
    rounded so that an integer number ``K = max(1, round(t_final / h0^power))``
    of steps reaches ``t_final`` exactly.  ``reference_length`` defaults to the
    perimeter of the initial Wulff shape.
    """

    model: AnisotropyModel
    ns: tuple
    t_final: float
    power: int = 2
    R0: float = 1.0
    reference_length: float | None = None
    spacing: str = "arclength"
    phase: float = 0.0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.power not in (1, 2):
            raise InvalidConfigError("time-step law power must be 1 or 2")
        if not self.ns or any(b <= a for a, b in zip(self.ns, self.ns[1:])) or min(self.ns) < 2:
            raise InvalidConfigError("n-range must be strictly increasing with n >= 2")
        if not self.t_final > 0:
            raise InvalidConfigError("target time must be positive")

    @property
    def law(self) -> str:
        return "h0" if self.power == 1 else "h0^2"

    def row_setup(self, n: int):
        length = self.reference_length or wulff_perimeter(self.model, self.R0)
        h0 = length / 2**n
        K = max(1, round(self.t_final / h0**self.power))
        return h0, K, self.t_final / K


def _run_row(spec: StudySpec, n: int) -> StudyRow:
    h0, K, tau = spec.row_setup(n)
    X0 = SimplicialSurface.closed_polygon(wulff_sample(spec.model, spec.R0, 2**n, spacing=spec.spacing, phase=spec.phase))
    cfg = SolverConfig(tau=tau, tau_tilde=tau, steps=K, **spec.solver)
    traj = run_flow(spec.model, X0, cfg)
    X = traj.final
    err = projected_l2_error(spec.model, X, exact_wulff_radius(spec.R0, K * tau))
    d = [r.diagnostics for r in traj.records[1:]]
    its = max((x.newton_iterations for x in d), default=0)
    rise = max((x.energy_out - x.energy_out_trivial for x in d), default=0.0)
    return StudyRow(n, h0, mesh_size(X), err, steps=K, tau=tau, max_newton_iterations=its, max_energy_increase=rise)


def _run_row_tagged(args):
    spec, n = args
    try:
        return _run_row(spec, n)
    except WillmoreError as exc:
        exc.args = (f"row n={n}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def run_convergence_study(spec: StudySpec, workers: int = 1) -> ConvergenceStudy:
    """Run every row (in ``workers`` processes when > 1) and tabulate errors and EOCs."""
    jobs = [(spec, n) for n in spec.ns]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_run_row_tagged, jobs))
    else:
        rows = [_run_row_tagged(j) for j in jobs]
    return ConvergenceStudy(spec.t_final, spec.law, rows)


# ---- energy reports ---------------------------------------------------------


@dataclass
class EnergyReport:
    steps: np.ndarray
    times: np.ndarray
    energy_out: np.ndarray
    energy_out_trivial: np.ndarray
    area: np.ndarray  # anisotropic length A_gamma
    enclosed_area: np.ndarray
    willmore: np.ndarray
    newton_iterations: np.ndarray
    error: np.ndarray | None = None

    @property
    def energy_decrease(self) -> np.ndarray:
        """``E_out[X^k, X^k, Y[X^k]] - E_out[X^k, X^{k+1}, Y[X^{k+1}]]`` per step (0 at step 0)."""
        return self.energy_out_trivial - self.energy_out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["step", "time", "energy_out", "energy_out_trivial", "area", "enclosed_area", "willmore", "newton_iterations"]
        if self.error is not None:
            head.append("error")
        w.writerow(head)
        for i in range(len(self.steps)):
            row = [int(self.steps[i]), repr(float(self.times[i]))]
            row += [repr(float(a[i])) for a in (self.energy_out, self.energy_out_trivial, self.area, self.enclosed_area, self.willmore)]
            row.append(int(self.newton_iterations[i]))
            if self.error is not None:
                row.append(repr(float(self.error[i])))
            w.writerow(row)
        return buf.getvalue()


def energy_report(trajectory: FlowTrajectory, model: AnisotropyModel | None = None, R0: float | None = None) -> EnergyReport:
    """Per-step diagnostics table; with ``model`` and ``R0`` also the error to the expanding Wulff shape."""
    recs = trajectory.records
    d = [r.diagnostics for r in recs]
    error = None
    if model is not None and R0 is not None:
        error = np.array([projected_l2_error(model, r.surface, exact_wulff_radius(R0, r.time)) for r in recs])
    return EnergyReport(
        steps=np.array([r.step for r in recs]),
        times=trajectory.times,
        energy_out=np.array([x.energy_out for x in d]),
        energy_out_trivial=np.array([x.energy_out_trivial for x in d]),
        area=np.array([x.area for x in d]),
        enclosed_area=np.array([enclosed_area(r.surface) for r in recs]),
        willmore=np.array([x.willmore for x in d]),
        newton_iterations=np.array([x.newton_iterations for x in d]),
        error=error,
    )
