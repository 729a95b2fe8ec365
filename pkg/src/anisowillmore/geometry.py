"""Simplicial meshes (closed polygons and triangle meshes) and the element normal map.

Nodal fields (displacements, multipliers, test directions) are plain
``(n_vertices, d + 1)`` float arrays aligned with a mesh's vertex list.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NearSingularError

LEVI_CIVITA = np.zeros((3, 3, 3))
for _w, _u, _v in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_w, _u, _v] = 1.0
    LEVI_CIVITA[_w, _v, _u] = -1.0

# d=1 normal R = (X0_y - X1_y, X1_x - X0_x); derivative table indexed [w, node, comp].
_DR_SEGMENT = np.zeros((2, 2, 2))
_DR_SEGMENT[:, 0, 0] = (0.0, -1.0)
_DR_SEGMENT[:, 0, 1] = (1.0, 0.0)
_DR_SEGMENT[:, 1, 0] = (0.0, 1.0)
_DR_SEGMENT[:, 1, 1] = (-1.0, 0.0)

# d=2: d(X1-X0)/dX_j and d(X2-X0)/dX_j
_C1 = np.array([-1.0, 1.0, 0.0])
_C2 = np.array([-1.0, 0.0, 1.0])
# R_{w, js, lt} = eps_{wst} (c1_j c2_l - c2_j c1_l)
_D2R_TRIANGLE = np.einsum("wst,jl->wjslt", LEVI_CIVITA, np.outer(_C1, _C2) - np.outer(_C2, _C1))


@dataclass(frozen=True, eq=False)
class SimplicialSurface:
    """Vertex coordinates plus element connectivity for ``d = 1`` or ``d = 2``.

    Closed polygons store element ``i`` as ``(i, i + 1 mod n)`` and are
    expected to be counterclockwise.
    """

    vertices: np.ndarray  # (n, d+1)
    elements: np.ndarray  # (E, d+1), int
    closed: bool = False

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        T = np.asarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "elements", T)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise InvalidInputError(f"vertices must have shape (n, 2) or (n, 3), got {V.shape}")
        if T.ndim != 2 or T.shape[1] != V.shape[1]:
            raise InvalidInputError("elements must have d+1 vertex indices each")
        if not np.all(np.isfinite(V)):
            raise InvalidInputError("non-finite vertex coordinates")
        if T.size and (T.min() < 0 or T.max() >= len(V)):
            raise InvalidInputError("element vertex index out of range")
        s = np.sort(T, axis=1)
        if np.any(s[:, 1:] == s[:, :-1]):
            raise InvalidInputError("element with repeated vertex index")

    @classmethod
    def closed_polygon(cls, points) -> SimplicialSurface:
        P = np.asarray(points, dtype=float)
        n = len(P)
        if n < 3:
            raise InvalidInputError("a closed polygon needs at least 3 vertices")
        idx = np.arange(n)
        return cls(P, np.column_stack([idx, (idx + 1) % n]), closed=True)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1] - 1

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_dofs(self) -> int:
        return self.vertices.size

    def with_vertices(self, vertices: np.ndarray) -> SimplicialSurface:
        """Same connectivity, new positions (no re-validation of the connectivity)."""
        V = np.asarray(vertices, dtype=float).reshape(self.vertices.shape)
        new = object.__new__(SimplicialSurface)
        object.__setattr__(new, "vertices", V)
        object.__setattr__(new, "elements", self.elements)
        object.__setattr__(new, "closed", self.closed)
        return new

    def element_coords(self, field: np.ndarray | None = None) -> np.ndarray:
        """Gather a nodal field (default: the vertices) per element, shape ``(E, d+1, d+1)``."""
        F = self.vertices if field is None else field
        return F[self.elements]

    def element_dofs(self) -> np.ndarray:
        """Global unknown indices ``(d+1) * vertex + component``, shape ``(E, (d+1)^2)``."""
        m = self.vertices.shape[1]
        return (self.elements[:, :, None] * m + np.arange(m)).reshape(len(self.elements), -1)

    def degeneracy_threshold(self) -> float:
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return 1e-12 * float(np.linalg.norm(extent))

    def is_nondegenerate(self) -> bool:
        R = element_normal_map(self.element_coords(), order=0).R
        return bool(np.all(np.linalg.norm(R, axis=1) >= self.degeneracy_threshold()))

    def check_nondegenerate(self) -> None:
        if not self.is_nondegenerate():
            raise NearSingularError("mesh has a degenerate element")


@dataclass(frozen=True)
class ElementNormal:
    """Element normal map ``R`` and its derivatives ``R_{w,js}``, ``R_{w,js,lt}``.

    ``dR`` has shape ``(E, w, j, s)`` and ``d2R`` shape ``(E, w, j, s, l, t)``;
    third derivatives vanish identically for both ``d = 1`` and ``d = 2``.
    """

    R: np.ndarray
    dR: np.ndarray | None = None
    d2R: np.ndarray | None = None

    @property
    def d3R(self) -> np.ndarray:
        m = self.R.shape[-1]
        return np.zeros(self.R.shape + (m, m) * 3)


def element_normal_map(Xbar: np.ndarray, order: int = 2) -> ElementNormal:
    """Normal map of each element from its node coordinates ``Xbar`` (shape ``(E, d+1, d+1)``).

    d=1: the edge vector rotated by +90 degrees, ``(X0_y - X1_y, X1_x - X0_x)``.
    d=2: the cross product ``(X1 - X0) x (X2 - X0)``.
    """
    Xbar = np.asarray(Xbar, dtype=float)
    single = Xbar.ndim == 2
    if single:
        Xbar = Xbar[None]
    E, nn, m = Xbar.shape
    if nn != m or m not in (2, 3):
        raise InvalidInputError(f"element coordinates must have shape (E, d+1, d+1), got {Xbar.shape}")
    if m == 2:
        e = Xbar[:, 1] - Xbar[:, 0]
        R = np.column_stack([-e[:, 1], e[:, 0]])
        dR = np.broadcast_to(_DR_SEGMENT, (E, 2, 2, 2)) if order >= 1 else None
        d2R = np.zeros((E, 2, 2, 2, 2, 2)) if order >= 2 else None
    else:
        e1 = Xbar[:, 1] - Xbar[:, 0]
        e2 = Xbar[:, 2] - Xbar[:, 0]
        R = np.cross(e1, e2)
        dR = d2R = None
        if order >= 1:
            a = np.einsum("wsv,ev->ews", LEVI_CIVITA, e2)  # d R / d e1_s
            b = np.einsum("wus,eu->ews", LEVI_CIVITA, e1)  # d R / d e2_s
            dR = np.einsum("j,ews->ewjs", _C1, a) + np.einsum("j,ews->ewjs", _C2, b)
        if order >= 2:
            d2R = np.broadcast_to(_D2R_TRIANGLE, (E,) + _D2R_TRIANGLE.shape)
    if single:
        return ElementNormal(R[0], None if dR is None else dR[0], None if d2R is None else d2R[0])
    return ElementNormal(R, dR, d2R)


def vertex_normals(surface: SimplicialSurface) -> np.ndarray:
    """Outward unit vertex normals of a counterclockwise closed polygon.

    Length-weighted average of the incident edge normals; since the edge
    normal ``R_T`` has the edge's length, this is the normalized sum of the
    two incident ``-R_T``.
    """
    if surface.dim != 1 or not surface.closed:
        raise InvalidInputError("vertex normals are defined for closed polygons")
    R = element_normal_map(surface.element_coords(), order=0).R
    lengths = np.linalg.norm(R, axis=1)
    if np.any(lengths < surface.degeneracy_threshold()):
        raise NearSingularError("degenerate edge adjacent to a vertex")
    n = surface.n_vertices
    acc = np.zeros((n, 2))
    np.add.at(acc, surface.elements[:, 0], -R)
    np.add.at(acc, surface.elements[:, 1], -R)
    norm = np.linalg.norm(acc, axis=1)
    if np.any(norm < surface.degeneracy_threshold()):
        raise NearSingularError("vertex normal undefined (incident edges cancel)")
    return acc / norm[:, None]


def vertex_normal(surface: SimplicialSurface, i: int) -> np.ndarray:
    return vertex_normals(surface)[i]


def lumped_weights(surface: SimplicialSurface) -> np.ndarray:
    """Half the total length (d=1) or a third of the area (d=2) of the incident elements."""
    R = element_normal_map(surface.element_coords(), order=0).R
    size = np.linalg.norm(R, axis=1)
    if surface.dim == 2:
        size = 0.5 * size
    w = np.zeros(surface.n_vertices)
    for j in range(surface.dim + 1):
        np.add.at(w, surface.elements[:, j], size / (surface.dim + 1))
    return w


def mesh_size(surface: SimplicialSurface) -> float:
    """Maximum element diameter."""
    X = surface.element_coords()
    nn = X.shape[1]
    diam = 0.0
    for a in range(nn):
        for b in range(a + 1, nn):
            diam = max(diam, float(np.linalg.norm(X[:, a] - X[:, b], axis=1).max()))
    return diam


def perimeter(surface: SimplicialSurface) -> float:
    X = surface.element_coords()
    return float(np.linalg.norm(X[:, 1] - X[:, 0], axis=1).sum())


def enclosed_area(surface: SimplicialSurface) -> float:
    """Signed area of a closed polygon (positive for counterclockwise)."""
    x, y = surface.vertices.T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---- file formats -----------------------------------------------------


def write_mesh(path, surface: SimplicialSurface) -> None:
    """Plain-text mesh: ``d n_vertices n_elements`` header, vertex lines, element lines."""
    lines = [f"{surface.dim} {surface.n_vertices} {len(surface.elements)}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in surface.vertices]
    lines += [" ".join(str(int(i)) for i in t) for t in surface.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialSurface:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        d, nv, ne = (int(x) for x in rows[0])
        V = np.array([[float(x) for x in r] for r in rows[1 : 1 + nv]])
        T = np.array([[int(x) for x in r] for r in rows[1 + nv : 1 + nv + ne]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"malformed mesh file {path}: {exc}") from exc
    if V.shape != (nv, d + 1) or T.shape != (ne, d + 1):
        raise InvalidInputError(f"mesh file {path} does not match its header")
    closed = d == 1 and ne == nv and np.array_equal(T, np.column_stack([np.arange(nv), (np.arange(nv) + 1) % nv]))
    return SimplicialSurface(V, T, closed=closed)


def write_snapshot_csv(path, surface: SimplicialSurface) -> None:
    """One ``x,y`` row per vertex, no header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for v in surface.vertices:
            writer.writerow([repr(float(c)) for c in v])


def read_snapshot_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
