"""Run and study configurations.

Config files are flat ``key = value`` lines with dotted keys; ``#`` starts a
comment.  Lists are comma separated.  A ``run.json`` written by a previous
run is accepted as well (its ``config`` entry holds the same flat mapping).

Step sizes are written as a number (absolute) or as ``h0``, ``h0^2``,
optionally with a factor, e.g. ``0.5*h0^2``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .anisotropy import AnisotropyModel, wulff_sample
from .errors import InvalidConfigError, InvalidInputError
from .geometry import SimplicialSurface, mesh_size, perimeter, read_mesh
from .solver import SolverConfig

_LAW = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?h0(\^2)?\s*$")
_SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"tau", "tau_tilde", "lam", "steps"}


def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InvalidConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise InvalidConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_mapping(path) -> dict[str, str]:
    """Read a flat config file or the ``config`` entry of a ``run.json``."""
    text = Path(path).read_text()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"{path}: invalid JSON ({exc})") from exc
        data = data.get("config", data) if isinstance(data, dict) else None
        if not isinstance(data, dict):
            raise InvalidConfigError(f"{path}: no config mapping found")
        return {str(k): str(v) for k, v in data.items()}
    return parse_flat(text, str(path))


@dataclass(frozen=True)
class StepLaw:
    """``tau = coef * h0^power`` (power 1 or 2) or an absolute value (power 0)."""

    coef: float
    power: int = 0

    @classmethod
    def parse(cls, text: str) -> StepLaw:
        m = _LAW.match(text)
        try:
            if m:
                return cls(float(m.group(1) or 1.0), 2 if m.group(2) else 1)
            return cls(float(text), 0)
        except ValueError:
            raise InvalidConfigError(f"cannot parse step size {text!r}") from None

    def value(self, h0: float) -> float:
        return self.coef * h0**self.power

    def __str__(self) -> str:
        if self.power == 0:
            return repr(self.coef)
        base = "h0" if self.power == 1 else "h0^2"
        return base if self.coef == 1.0 else f"{self.coef!r}*{base}"


class _Reader:
    """Typed access to a flat mapping that tracks which keys were used."""

    def __init__(self, mapping: dict[str, str]):
        self.m = dict(mapping)
        self.used: set[str] = set()

    def get(self, key, conv=str, default=None, required=False):
        if key not in self.m:
            if required:
                raise InvalidConfigError(f"missing required key {key!r}")
            return default
        self.used.add(key)
        try:
            return conv(self.m[key])
        except (ValueError, TypeError) as exc:
            raise InvalidConfigError(f"bad value for {key!r}: {self.m[key]!r}") from exc

    def floats(self, key, default=None):
        return self.get(key, lambda s: [float(x) for x in s.split(",") if x.strip()], default)

    def ints(self, key, default=None):
        return self.get(key, lambda s: [int(x) for x in s.split(",") if x.strip()], default)

    def prefixed(self, prefix):
        keys = [k for k in self.m if k.startswith(prefix)]
        self.used.update(keys)
        return {k[len(prefix) :]: self.m[k] for k in keys}

    def check_unused(self):
        extra = sorted(set(self.m) - self.used)
        if extra:
            raise InvalidConfigError(f"unknown config keys: {', '.join(extra)}")


def _int_range(s: str) -> list[int]:
    """``4, 5, 6`` or ``4..8`` (inclusive)."""
    if ".." in s:
        a, b = s.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in s.split(",") if x.strip()]


def model_from(r: _Reader, prefix: str, required: bool = True) -> AnisotropyModel | None:
    kind = r.get(prefix + "kind", required=required)
    if kind is None:
        return None
    kind = kind.lower()
    try:
        if kind == "isotropic":
            return AnisotropyModel.isotropic()
        if kind == "elliptic":
            return AnisotropyModel.elliptic(*r.floats(prefix + "axes", [1.0, 1.0]))
        if kind in ("reg_l1", "regl1"):
            return AnisotropyModel.reg_l1(r.get(prefix + "eps", float, required=True))
        if kind in ("reg_linf", "reglinf"):
            return AnisotropyModel.reg_linf(r.get(prefix + "eps", float, required=True))
    except InvalidInputError as exc:
        raise InvalidConfigError(str(exc)) from exc
    raise InvalidConfigError(f"unknown anisotropy kind {kind!r}")


def _solver_overrides(r: _Reader) -> dict:
    raw = r.prefixed("solver.")
    out = {}
    for k, v in raw.items():
        if k not in _SOLVER_KEYS:
            raise InvalidConfigError(f"unknown solver option {k!r}")
        conv = int if k in ("max_newton_iter", "dense_fallback_vertices", "continuation_stages") else float
        try:
            out[k] = conv(v)
        except ValueError as exc:
            raise InvalidConfigError(f"bad value for solver.{k}: {v!r}") from exc
    return out


@dataclass
class InitialCurve:
    kind: str = "wulff"  # "wulff" or "mesh"
    radius: float = 1.0
    vertices: int = 64
    spacing: str = "angle"
    phase: float = 0.0
    model: AnisotropyModel | None = None  # sampling model; None means the flow model
    path: str | None = None

    def build(self, flow_model: AnisotropyModel) -> SimplicialSurface:
        if self.kind == "mesh":
            return read_mesh(self.path)
        model = self.model or flow_model
        try:
            pts = wulff_sample(model, self.radius, self.vertices, spacing=self.spacing, phase=self.phase)
        except InvalidInputError as exc:
            raise InvalidConfigError(str(exc)) from exc
        return SimplicialSurface.closed_polygon(pts)


@dataclass
class RunConfig:
    model: AnisotropyModel
    initial: InitialCurve
    tau: StepLaw
    tau_tilde: StepLaw
    steps: int
    lam: float = 0.0
    snapshots: list[int] = field(default_factory=lambda: [0])
    h0: str = "mesh"  # "mesh" (max edge), "mean" (perimeter / m) or a number
    exact_error: str = "auto"
    out: str | None = None
    solver: dict = field(default_factory=dict)
    mapping: dict = field(default_factory=dict)  # the flat mapping it came from

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> RunConfig:
        r = _Reader(mapping)
        model = model_from(r, "anisotropy.")
        init = InitialCurve(
            kind=r.get("initial.kind", str, "wulff"),
            radius=r.get("initial.radius", float, 1.0),
            vertices=r.get("initial.vertices", int, 64),
            spacing=r.get("initial.spacing", str, "angle"),
            phase=r.get("initial.phase", float, 0.0),
            model=model_from(r, "initial.anisotropy.", required=False),
            path=r.get("initial.path"),
        )
        cfg = cls(
            model=model,
            initial=init,
            tau=r.get("time.tau", StepLaw.parse, required=True),
            tau_tilde=r.get("time.tau_tilde", StepLaw.parse, required=True),
            steps=r.get("flow.steps", int, required=True),
            lam=r.get("flow.lam", float, 0.0),
            snapshots=r.ints("output.snapshots", None),
            h0=r.get("time.h0", str, "mesh"),
            exact_error=r.get("output.exact_error", str, "auto"),
            out=r.get("output.dir"),
            solver=_solver_overrides(r),
            mapping=dict(mapping),
        )
        r.check_unused()
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> RunConfig:
        return cls.from_mapping(load_mapping(path))

    def validate(self) -> None:
        if self.steps < 0:
            raise InvalidConfigError("flow.steps must be non-negative")
        if self.lam < 0:
            raise InvalidConfigError("flow.lam must be non-negative")
        if self.snapshots is None:
            self.snapshots = sorted({0, self.steps})
        if any(s < 0 or s > self.steps for s in self.snapshots):
            raise InvalidConfigError("snapshot indices must lie in [0, flow.steps]")
        if self.initial.kind not in ("wulff", "mesh"):
            raise InvalidConfigError("initial.kind must be 'wulff' or 'mesh'")
        if self.initial.kind == "mesh" and not self.initial.path:
            raise InvalidConfigError("initial.kind = mesh needs initial.path")
        if self.initial.kind == "wulff" and (self.initial.vertices < 3 or not self.initial.radius > 0):
            raise InvalidConfigError("initial.vertices must be >= 3 and initial.radius > 0")
        if self.initial.spacing not in ("angle", "arclength", "parameter"):
            raise InvalidConfigError("initial.spacing must be 'angle', 'arclength' or 'parameter'")
        if self.exact_error not in ("auto", "true", "false"):
            raise InvalidConfigError("output.exact_error must be auto, true or false")
        if self.h0 not in ("mesh", "mean"):
            try:
                if not float(self.h0) > 0:
                    raise ValueError
            except ValueError:
                raise InvalidConfigError("time.h0 must be 'mesh', 'mean' or a positive number") from None

    def h0_of(self, surface: SimplicialSurface) -> float:
        if self.h0 == "mesh":
            return mesh_size(surface)
        if self.h0 == "mean":
            return perimeter(surface) / len(surface.elements)
        return float(self.h0)

    def solver_config(self, surface: SimplicialSurface) -> SolverConfig:
        h0 = self.h0_of(surface)
        return SolverConfig(
            tau=self.tau.value(h0), tau_tilde=self.tau_tilde.value(h0), lam=self.lam, steps=self.steps, **self.solver
        )

    def wants_exact_error(self) -> bool:
        if self.exact_error != "auto":
            return self.exact_error == "true"
        m = self.initial.model
        same_model = m is None or (m.kind, m.params) == (self.model.kind, self.model.params)
        return self.initial.kind == "wulff" and same_model and self.lam == 0


@dataclass
class StudyConfig:
    model: AnisotropyModel
    ns: list[int]
    t_final: float
    power: int
    radius: float = 1.0
    reference_length: float | None = None
    spacing: str = "arclength"
    phase: float = 0.0
    solver: dict = field(default_factory=dict)
    out: str | None = None
    mapping: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> StudyConfig:
        r = _Reader(mapping)
        cfg = cls(
            model=model_from(r, "anisotropy."),
            ns=r.get("study.n", _int_range, required=True),
            t_final=r.get("study.t_final", float, required=True),
            power=r.get("study.power", int, 2),
            radius=r.get("initial.radius", float, 1.0),
            reference_length=r.get("study.reference_length", float),
            spacing=r.get("initial.spacing", str, "arclength"),
            phase=r.get("initial.phase", float, 0.0),
            solver=_solver_overrides(r),
            out=r.get("output.dir"),
            mapping=dict(mapping),
        )
        r.check_unused()
        return cfg

    @classmethod
    def from_file(cls, path) -> StudyConfig:
        return cls.from_mapping(load_mapping(path))

    def spec(self):
        from .analysis import StudySpec

        return StudySpec(
            self.model,
            tuple(self.ns),
            self.t_final,
            power=self.power,
            R0=self.radius,
            reference_length=self.reference_length,
            spacing=self.spacing,
            phase=self.phase,
            solver=dict(self.solver),
        )


def describe_model(model: AnisotropyModel) -> dict:
    return {"kind": model.kind, "params": list(model.params)}
