"""
Comparison of a reconstructed nodal field with the true one.

All fields use the stacked layout ``[ex(1..N), ey(1..N)]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .forward import DipoleSource
from .geometry import TriMesh

ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class EvalResult:
    mr: float
    cs: float
    loc_node: int
    loc_error: float
    max_mag_ratio: float
    excluded: int = 0


def _split(e, n=None):
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or len(e) % 2:
        raise DimensionMismatchError(f"field must be a flat vector of even length, got shape {e.shape}")
    N = len(e) // 2
    if n is not None and N != n:
        raise DimensionMismatchError(f"field has {N} nodes, expected {n}")
    return e[:N], e[N:]


def magnitudes(e) -> np.ndarray:
    ex, ey = _split(e)
    return np.hypot(ex, ey)


def _pair(e_hat, e_true):
    a = _split(e_hat)
    b = _split(e_true)
    if len(a[0]) != len(b[0]):
        raise DimensionMismatchError(f"fields have {len(a[0])} and {len(b[0])} nodes")
    return a, b


def magnitude_ratio(e_hat, e_true) -> Tuple[float, int]:
    """Mean nodal ratio ``|e_hat| / |e_true|`` and the number of excluded nodes.

    Nodes whose true magnitude is below ``1e-12`` times the true maximum are
    left out of the mean.
    """
    (hx, hy), (tx, ty) = _pair(e_hat, e_true)
    mt = np.hypot(tx, ty)
    keep = mt >= ZERO_RTOL * mt.max() if mt.max() > 0 else np.zeros(len(mt), bool)
    if not keep.any():
        raise InvalidParameterError("true field vanishes at every node")
    return float(np.mean(np.hypot(hx, hy)[keep] / mt[keep])), int((~keep).sum())


def cosine_similarity(e_hat, e_true) -> Tuple[float, int]:
    """Mean nodal cosine between the two fields and the number of excluded nodes.

    A node is excluded when either field is (relatively) zero there.
    """
    (hx, hy), (tx, ty) = _pair(e_hat, e_true)
    mh, mt = np.hypot(hx, hy), np.hypot(tx, ty)
    keep = np.ones(len(mt), bool)
    for m in (mh, mt):
        keep &= m > ZERO_RTOL * m.max() if m.max() > 0 else False
    if not keep.any():
        raise InvalidParameterError("no node where both fields are non-zero")
    cos = (hx * tx + hy * ty)[keep] / (mh * mt)[keep]
    return float(np.mean(np.clip(cos, -1.0, 1.0))), int((~keep).sum())


def localize(e_hat, mesh: TriMesh, true_src: DipoleSource) -> Tuple[int, float]:
    """Node of maximal magnitude (lowest index on ties) and its distance to the source."""
    ex, ey = _split(e_hat, mesh.n_nodes)
    mag = np.hypot(ex, ey)
    if not mag.max() > 0:
        raise InvalidParameterError("cannot localise a zero field")
    k = int(np.argmax(mag))  # argmax returns the first maximum
    return k, float(np.linalg.norm(mesh.nodes[k] - true_src.location))


def evaluate(e_hat, e_true, mesh: TriMesh, true_src: DipoleSource) -> EvalResult:
    mr, n_excl = magnitude_ratio(e_hat, e_true)
    cs, _ = cosine_similarity(e_hat, e_true)
    k, err = localize(e_hat, mesh, true_src)
    ratio = magnitudes(e_hat).max() / magnitudes(e_true).max()
    return EvalResult(mr, cs, k, err, float(ratio), n_excl)
