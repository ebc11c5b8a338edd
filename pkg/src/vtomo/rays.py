"""
Sparse ray matrices for longitudinal and transverse chord integrals.

A nodal field is stored as ``[e_1x, ..., e_Nx, e_1y, ..., e_Ny]``. Inside an
element the field is the linear interpolant of its three corner values, so
the integral of ``dir . e`` over a straight segment equals the segment length
times the interpolant evaluated at the segment midpoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError, GeometryError, ParseError
from .geometry import Chord, Segment, TriMesh, barycentric, clip_params


class Flavor(str, Enum):
    LONGITUDINAL = "longitudinal"
    TRANSVERSE = "transverse"


@dataclass(frozen=True, eq=False)
class RayMatrix:
    """``m x 2N`` operator; ``matrix`` is CSR with sorted column indices."""

    matrix: sp.csr_matrix
    flavor: Flavor

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(row, col, value)`` sorted by row then column."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


def segment_coefficients(mesh: TriMesh, seg: Segment, direction) -> List[Tuple[int, float]]:
    """Six ``(column, coefficient)`` pairs for one segment.

    The first three address x-components of the element's vertices, the last
    three the y-components (offset by ``N``).
    """
    direction = np.asarray(direction, dtype=float)
    length = seg.length
    mid = seg.xA + 0.5 * (seg.xB - seg.xA)
    c1, c2 = barycentric(mesh, seg.element_id, mid)
    weights = (1.0 - c1 - c2, c1, c2)
    ids = mesh.elements[seg.element_id]
    N = mesh.n_nodes
    out = [(int(i), length * direction[0] * w) for i, w in zip(ids, weights)]
    out += [(int(i) + N, length * direction[1] * w) for i, w in zip(ids, weights)]
    return out


def _row_entries(mesh, chord, direction):
    """Vectorised :func:`segment_coefficients` over all segments of one chord."""
    eids, t0, t1 = clip_params(chord, mesh)
    delta = chord.b - chord.a
    xa = chord.a + t0[:, None] * delta
    xb = chord.a + t1[:, None] * delta
    length = np.linalg.norm(xb - xa, axis=1)
    mid = xa + 0.5 * (xb - xa)
    J = mesh.jacobians[eids]
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    r = mid - mesh.vertices[eids, 0]
    c1 = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
    c2 = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
    w = np.column_stack([1.0 - c1 - c2, c1, c2]) * length[:, None]
    ids = mesh.elements[eids]
    N = mesh.n_nodes
    cols = np.concatenate([ids.ravel(), ids.ravel() + N])
    vals = np.concatenate([(w * direction[0]).ravel(), (w * direction[1]).ravel()])
    return cols, vals


def _accumulate(rows, cols, vals, shape):
    # Sum duplicates in a canonical order so values do not depend on the
    # order in which contributions were generated.
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows * shape[1] + cols
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    summed = np.add.reduceat(vals, start) if len(vals) else vals
    m = sp.csr_matrix((summed, (rows[start], cols[start])), shape=shape)
    m.sort_indices()
    return m


def assemble(mesh: TriMesh, chords: Sequence[Chord], flavor=Flavor.LONGITUDINAL) -> RayMatrix:
    """Ray matrix for ``chords`` on ``mesh``.

    Longitudinal rows integrate ``s_hat . e``; transverse rows ``s_perp . e``.
    """
    flavor = Flavor(flavor)
    all_rows, all_cols, all_vals = [], [], []
    for i, chord in enumerate(chords):
        direction = chord.s_hat if flavor is Flavor.LONGITUDINAL else chord.s_perp
        try:
            cols, vals = _row_entries(mesh, chord, direction)
        except GeometryError as exc:
            raise GeometryError(f"chord {i}: {exc}") from exc
        all_rows.append(np.full(len(cols), i, dtype=np.int64))
        all_cols.append(cols)
        all_vals.append(vals)
    shape = (len(chords), 2 * mesh.n_nodes)
    if not chords:
        return RayMatrix(sp.csr_matrix(shape), flavor)
    matrix = _accumulate(np.concatenate(all_rows), np.concatenate(all_cols),
                         np.concatenate(all_vals), shape)
    return RayMatrix(matrix, flavor)


def apply(R: RayMatrix, e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or len(e) != R.n_cols:
        raise DimensionMismatchError(f"field has length {e.shape}, ray matrix expects {R.n_cols}")
    return R.matrix @ e


def write_triplets(R: RayMatrix, path) -> None:
    rows, cols, vals = R.triplets()
    lines = [f"# {R.flavor.value} ray matrix",
             f"{R.n_rows} {R.n_cols} {len(vals)}"]
    lines += [f"{r} {c} {v!r}" for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets(path, flavor=Flavor.LONGITUDINAL) -> RayMatrix:
    first = None
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) != 3:
                raise ParseError("expected three fields", path, lineno)
            try:
                if first is None:
                    first = tuple(int(t) for t in toks)
                    continue
                rows.append(int(toks[0]))
                cols.append(int(toks[1]))
                vals.append(float(toks[2]))
            except ValueError:
                raise ParseError("malformed number", path, lineno) from None
    if first is None:
        raise ParseError("missing header", path)
    m, n, nnz = first
    if len(vals) != nnz:
        raise ParseError(f"header announces {nnz} entries, found {len(vals)}", path)
    rows, cols = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)
    if nnz and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
        raise ParseError("entry index out of range", path)
    matrix = sp.csr_matrix((np.array(vals), (rows, cols)), shape=(m, n))
    matrix.sort_indices()
    return RayMatrix(matrix, Flavor(flavor))
