"""
Planar triangle meshes, boundary electrodes and chord/element clipping.

Points are plain ``numpy`` arrays of shape ``(2,)``. A :class:`TriMesh` stores
its node coordinates as an ``(N, 2)`` array and its connectivity as an
``(N_E, 3)`` integer array of counterclockwise vertex triples.

Tolerances
----------
Two fixed geometric constants are used throughout:

``LENGTH_RTOL = 1e-9``
    relative tolerance for length bookkeeping (chord length conservation).
``DROP_RTOL = 1e-12``
    relative size below which an intersection is treated as a point and
    dropped; also the relative distance below which a vertex counts as lying
    on a chord.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import DegenerateElementError, GeometryError, InvalidParameterError, ParseError

LENGTH_RTOL = 1e-9
DROP_RTOL = 1e-12
DEGENERATE_RTOL = 1e-14


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation of a planar domain with uniform conductivity.

    Parameters
    ----------
    nodes : array, shape (N, 2)
    elements : array, shape (N_E, 3)
        Counterclockwise vertex triples (0-based).
    boundary_nodes : array
        Node ids tracing the boundary counterclockwise, each listed once.
    sigma : float
        Conductivity, strictly positive.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        boundary = np.asarray(self.boundary_nodes, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise InvalidParameterError("nodes must have shape (N, 2)")
        if not np.all(np.isfinite(nodes)):
            raise InvalidParameterError("node coordinates must be finite")
        if elements.ndim != 2 or elements.shape[1] != 3 or len(elements) == 0:
            raise InvalidParameterError("elements must have shape (N_E, 3) with N_E >= 1")
        n = len(nodes)
        if elements.min() < 0 or elements.max() >= n:
            raise InvalidParameterError("element index out of range")
        if boundary.ndim != 1 or len(boundary) < 3:
            raise InvalidParameterError("boundary must contain at least 3 nodes")
        if boundary.min() < 0 or boundary.max() >= n:
            raise InvalidParameterError("boundary node index out of range")
        if len(np.unique(boundary)) != len(boundary):
            raise InvalidParameterError("boundary nodes must be distinct")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParameterError("conductivity must be positive")
        object.__setattr__(self, "nodes", _readonly(nodes))
        object.__setattr__(self, "elements", _readonly(elements))
        object.__setattr__(self, "boundary_nodes", _readonly(boundary))
        object.__setattr__(self, "sigma", float(self.sigma))
        if np.any(self.signed_areas <= 0):
            bad = int(np.argmax(self.signed_areas <= 0))
            raise InvalidParameterError(f"element {bad} is not counterclockwise (signed area <= 0)")
        self._check_boundary()

    def _check_boundary(self):
        e = self.elements
        pairs = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        pairs.sort(axis=1)
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        if counts.max() > 2:
            raise InvalidParameterError("an edge is shared by more than two elements")
        free = {tuple(p) for p in uniq[counts == 1].tolist()}
        b = self.boundary_nodes.tolist()
        ring = {(min(u, v), max(u, v)) for u, v in zip(b, b[1:] + b[:1])}
        if free != ring:
            raise InvalidParameterError("boundary nodes do not trace the mesh boundary as one closed polygon")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Element corner coordinates, shape (N_E, 3, 2)."""
        return _readonly(self.nodes[self.elements])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """``J = [x2 - x1, x3 - x1]`` per element, shape (N_E, 2, 2)."""
        v = self.vertices
        return _readonly(np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        J = self.jacobians
        return _readonly(0.5 * (J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]))

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(i, j)`` with ``i < j``, sorted."""
        e = self.elements
        pairs = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        pairs.sort(axis=1)
        return _readonly(np.unique(pairs, axis=0))

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return _readonly(np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1))

    @property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    @cached_property
    def neighbors(self) -> Tuple[np.ndarray, ...]:
        """Edge-adjacent node ids for every node, ascending."""
        adj = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(_readonly(np.array(sorted(a), dtype=np.int64)) for a in adj)

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Arc-length weight of each boundary node (half of its two boundary edges)."""
        b = self.boundary_nodes
        p = self.nodes[b]
        seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
        return _readonly(0.5 * (seg + np.roll(seg, 1)))


def build_disk_mesh(radius: float, target_h: float, sigma: float = 1.0) -> TriMesh:
    """Structured disk mesh made of concentric rings.

    Ring ``k`` (``k = 1..K``, ``K = ceil(radius / target_h)``) sits at radius
    ``k * radius / K`` and carries ``6k`` nodes starting at angle 0. Adjacent
    rings are stitched by walking both rings in angle and always closing the
    quadrilateral across its angularly shorter diagonal; the innermost ring is
    a fan around the centre. The result is invariant under rotations by 60
    degrees and under reflection about the x-axis.

    Node 0 is the centre; the boundary is the outermost ring, counterclockwise
    from angle 0.
    """
    if not (radius > 0 and math.isfinite(radius)):
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    if not (0 < target_h < radius):
        raise InvalidParameterError(f"target_h must satisfy 0 < target_h < radius, got {target_h}")
    K = max(1, int(math.ceil(radius / target_h - 1e-9)))

    coords = [(0.0, 0.0)]
    ring_ids = [np.array([0])]
    ring_angles = [np.array([0.0])]
    for k in range(1, K + 1):
        m = 6 * k
        r = radius * k / K
        theta = 2.0 * np.pi * np.arange(m) / m
        start = len(coords)
        coords.extend(zip(r * np.cos(theta), r * np.sin(theta)))
        ring_ids.append(np.arange(start, start + m))
        ring_angles.append(theta)

    tris = []
    outer = ring_ids[1]
    for j in range(len(outer)):
        tris.append((0, outer[j], outer[(j + 1) % len(outer)]))
    for k in range(2, K + 1):
        tris.extend(_stitch_rings(ring_ids[k - 1], ring_angles[k - 1], ring_ids[k], ring_angles[k]))

    nodes = np.array(coords)
    # boundary nodes sit exactly on the circle up to cos/sin rounding
    return TriMesh(nodes, np.array(tris, dtype=np.int64), ring_ids[K], sigma)


def _stitch_rings(inner, inner_theta, outer, outer_theta):
    ni, no = len(inner), len(outer)
    ti = np.append(inner_theta, 2.0 * np.pi)
    to = np.append(outer_theta, 2.0 * np.pi)
    i = j = 0
    out = []
    while i < ni or j < no:
        if i == ni:
            advance_outer = True
        elif j == no:
            advance_outer = False
        else:
            advance_outer = (to[j + 1] - ti[i]) < (ti[i + 1] - to[j])
        if advance_outer:
            out.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            out.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return out


@dataclass(frozen=True)
class ElectrodeLayout:
    mesh_node_ids: np.ndarray
    angles: np.ndarray

    @property
    def n(self) -> int:
        return len(self.mesh_node_ids)


def place_electrodes(mesh: TriMesh, n: int) -> ElectrodeLayout:
    """Snap ``n`` equispaced ideal angles ``2 pi k / n`` to the nearest boundary nodes.

    Angles are measured about the centroid of the boundary polygon. The
    returned angles are unwrapped next to their ideal values, so they are
    increasing.
    """
    if n < 3:
        raise InvalidParameterError(f"need at least 3 electrodes, got {n}")
    b = mesh.boundary_nodes
    if len(b) < n:
        raise GeometryError(f"too few boundary nodes: {len(b)} < {n} electrodes")
    centre = mesh.nodes[b].mean(axis=0)
    rel = mesh.nodes[b] - centre
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    ideal = 2.0 * np.pi * np.arange(n) / n
    diff = np.angle(np.exp(1j * (theta[None, :] - ideal[:, None])))
    pick = np.argmin(np.abs(diff), axis=1)
    ids = b[pick]
    if len(np.unique(ids)) != n:
        raise GeometryError("two ideal electrode angles snapped to the same boundary node")
    angles = ideal + diff[np.arange(n), pick]
    return ElectrodeLayout(_readonly(ids), _readonly(angles))


@dataclass(frozen=True, eq=False)
class Chord:
    """Integration line between two electrodes, oriented from ``a`` to ``b``."""

    a: np.ndarray
    b: np.ndarray
    s_hat: np.ndarray
    s_perp: np.ndarray
    l: float
    endpoints: Tuple[int, int]
    length: float

    @classmethod
    def between(cls, a, b, endpoints=(0, 1)) -> "Chord":
        a = np.array(a, dtype=float)
        b = np.array(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            raise InvalidParameterError("chord endpoints coincide")
        s_hat = (b - a) / length
        s_perp = np.array([-s_hat[1], s_hat[0]])
        return cls(_readonly(a), _readonly(b), _readonly(s_hat), _readonly(s_perp),
                   float(a @ s_perp), (int(endpoints[0]), int(endpoints[1])), length)


def enumerate_chords(layout: ElectrodeLayout, mesh: TriMesh) -> List[Chord]:
    """All ``n(n-1)/2`` electrode pairs, lexicographic in electrode index."""
    p = mesh.nodes[layout.mesh_node_ids]
    n = layout.n
    return [Chord.between(p[i], p[j], (i, j)) for i in range(n) for j in range(i + 1, n)]


@dataclass(frozen=True, eq=False)
class Segment:
    element_id: int
    xA: np.ndarray
    xB: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return self.xB - self.xA

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.xB - self.xA))


_EDGES = ((0, 1), (1, 2), (2, 0))


def clip_chord(chord: Chord, mesh: TriMesh) -> List[Segment]:
    """Intersect a chord with every element; segments are ordered from ``a`` to ``b``.

    A chord running along a mesh edge is charged to the element lying on its
    ``s_perp`` side; the other side is used only when no such element exists
    (a boundary edge).
    """
    eids, tmin, tmax = clip_params(chord, mesh)
    a, delta = chord.a, chord.b - chord.a
    return [Segment(int(k), a + t0 * delta, a + t1 * delta) for k, t0, t1 in zip(eids, tmin, tmax)]


def clip_params(chord: Chord, mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`clip_chord`: element ids and chord parameters in [0, 1]."""
    L = chord.length
    tol = DROP_RTOL * L
    rel = mesh.nodes - chord.a
    elems = mesh.elements
    dist = (rel @ chord.s_perp)[elems]
    tpar = ((rel @ chord.s_hat) / L)[elems]

    on = np.abs(dist) <= tol
    pos = dist > tol
    neg = dist < -tol
    touching = (pos | on).any(axis=1) & (neg | on).any(axis=1)
    idx = np.flatnonzero(touching)
    if len(idx) == 0:
        raise GeometryError(f"chord {chord.endpoints} misses the mesh")
    d, t, o, p_, n_ = dist[idx], tpar[idx], on[idx], pos[idx], neg[idx]

    tmin = np.where(o, t, np.inf).min(axis=1)
    tmax = np.where(o, t, -np.inf).max(axis=1)
    for u, v in _EDGES:
        cross = (p_[:, u] & n_[:, v]) | (n_[:, u] & p_[:, v])
        with np.errstate(invalid="ignore", divide="ignore"):
            tc = t[:, u] + (t[:, v] - t[:, u]) * d[:, u] / (d[:, u] - d[:, v])
        tmin = np.where(cross, np.minimum(tmin, tc), tmin)
        tmax = np.where(cross, np.maximum(tmax, tc), tmax)
    tmin = np.clip(tmin, 0.0, 1.0)
    tmax = np.clip(tmax, 0.0, 1.0)
    keep = (tmax - tmin) * L > tol

    n_on = o.sum(axis=1)
    on_edge = n_on == 2
    behind = on_edge & n_.any(axis=1)
    primary = keep & ~behind
    covered = set()
    for k in np.flatnonzero(primary & on_edge):
        covered.add(_on_edge_key(mesh, idx[k], o[k]))
    fallback = [k for k in np.flatnonzero(keep & behind)
                if _on_edge_key(mesh, idx[k], o[k]) not in covered]
    chosen = np.concatenate([np.flatnonzero(primary), np.array(fallback, dtype=np.int64)])
    if len(chosen) == 0:
        raise GeometryError(f"chord {chord.endpoints} has no intersection with any element")
    chosen = chosen[np.lexsort((idx[chosen], tmin[chosen]))]
    return idx[chosen], tmin[chosen], tmax[chosen]


def _on_edge_key(mesh, element_id, on_mask):
    ids = mesh.elements[element_id][on_mask]
    return (int(min(ids)), int(max(ids)))


def barycentric(mesh: TriMesh, element_id: int, p) -> Tuple[float, float]:
    """Solve ``p = x1 + J d`` for ``d = (d1, d2)``; extrapolates outside the element."""
    J = mesh.jacobians[element_id]
    scale = float(np.abs(J).max())
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(det) <= DEGENERATE_RTOL * scale * scale:
        raise DegenerateElementError(f"element {element_id} is degenerate (det J = {det:g})")
    r = np.asarray(p, dtype=float) - mesh.vertices[element_id, 0]
    d1 = (J[1, 1] * r[0] - J[0, 1] * r[1]) / det
    d2 = (-J[1, 0] * r[0] + J[0, 0] * r[1]) / det
    return float(d1), float(d2)


def locate_points(mesh: TriMesh, points, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """Element id and barycentric pair for each point.

    Picks the lowest-id element whose barycentric coordinates all lie in
    ``[-tol, 1 + tol]``; raises :class:`GeometryError` if a point is outside.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    J = mesh.jacobians
    det = 2.0 * mesh.signed_areas
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    x1 = mesh.vertices[:, 0]
    eids = np.empty(len(points), dtype=np.int64)
    bary = np.empty((len(points), 2))
    for k, p in enumerate(points):
        d = np.einsum("eij,ej->ei", inv, p - x1)
        lam = np.column_stack([1.0 - d[:, 0] - d[:, 1], d])
        inside = np.flatnonzero((lam >= -tol).all(axis=1) & (lam <= 1.0 + tol).all(axis=1))
        if len(inside) == 0:
            raise GeometryError(f"point {k} at ({p[0]:.17g}, {p[1]:.17g}) is not inside the mesh")
        e = inside[0]
        eids[k] = e
        bary[k] = d[e]
    return eids, bary


def write_mesh(mesh: TriMesh, path) -> None:
    """Write the plain-text mesh format (coordinates in shortest round-trip decimal)."""
    lines = [f"# triangle mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements",
             f"{mesh.n_nodes} {mesh.n_elements} {len(mesh.boundary_nodes)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    lines += [str(i) for i in mesh.boundary_nodes.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, sigma: float = 1.0) -> TriMesh:
    records = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            records.append((lineno, line.split()))
    if not records:
        raise ParseError("empty mesh file", path)

    def ints(rec, count):
        lineno, toks = rec
        if len(toks) != count:
            raise ParseError(f"expected {count} integers, got {len(toks)}", path, lineno)
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise ParseError("malformed integer", path, lineno) from None

    n, ne, nb = ints(records[0], 3)
    if len(records) != 1 + n + ne + nb:
        raise ParseError(f"expected {1 + n + ne + nb} records, found {len(records)}", path)
    nodes = np.empty((n, 2))
    for k, (lineno, toks) in enumerate(records[1:1 + n]):
        if len(toks) != 2:
            raise ParseError("expected 'x y'", path, lineno)
        try:
            nodes[k] = [float(toks[0]), float(toks[1])]
        except ValueError:
            raise ParseError("malformed coordinate", path, lineno) from None
    elements = np.array([ints(r, 3) for r in records[1 + n:1 + n + ne]], dtype=np.int64).reshape(ne, 3)
    boundary = np.array([ints(r, 1)[0] for r in records[1 + n + ne:]], dtype=np.int64)
    try:
        return TriMesh(nodes, elements, boundary, sigma)
    except InvalidParameterError as exc:
        raise ParseError(str(exc), path) from exc
