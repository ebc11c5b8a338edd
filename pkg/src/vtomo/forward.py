"""
Forward model: P1 finite elements for a current dipole in a homogeneous
conductor with insulating boundary.

The potential solves ``div(sigma grad u) = div(j_s)`` with ``du/dn = 0`` on
the boundary, normalised to zero arc-length-weighted boundary mean. For a
point dipole ``j_s = q delta(x - x0)`` the weak form gives the load
``b_i = q . grad(phi_i)(x0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatchError, GeometryError, InvalidParameterError, SolverError
from .geometry import Chord, ElectrodeLayout, TriMesh, locate_points

RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class DipoleSource:
    location: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        loc = np.array(self.location, dtype=float).reshape(2)
        q = np.array(self.moment, dtype=float).reshape(2)
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(q))):
            raise InvalidParameterError("dipole location and moment must be finite")
        if not np.linalg.norm(q) > 0:
            raise InvalidParameterError("dipole moment must be non-zero")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "moment", q)


Sources = Union[DipoleSource, Sequence[DipoleSource]]


def _as_list(src: Sources):
    return [src] if isinstance(src, DipoleSource) else list(src)


def basis_gradients(mesh: TriMesh) -> np.ndarray:
    """Constant gradients of the three P1 basis functions per element, shape (N_E, 3, 2)."""
    J = mesh.jacobians
    det = 2.0 * mesh.signed_areas
    # rows of J^{-1} are the gradients of the two local coordinates
    g2 = np.column_stack([J[:, 1, 1], -J[:, 0, 1]]) / det[:, None]
    g3 = np.column_stack([-J[:, 1, 0], J[:, 0, 0]]) / det[:, None]
    return np.stack([-(g2 + g3), g2, g3], axis=1)


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    G = basis_gradients(mesh)
    local = mesh.sigma * mesh.areas[:, None, None] * np.einsum("eik,ejk->eij", G, G)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    N = mesh.n_nodes
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(N, N))
    K.sum_duplicates()
    K.sort_indices()
    return K


def dipole_rhs(mesh: TriMesh, src: DipoleSource) -> np.ndarray:
    """Load vector of one point dipole.

    When the dipole sits on an edge or vertex, the gradients of every element
    containing it are averaged.
    """
    eids = _containing_elements(mesh, src.location)
    G = basis_gradients(mesh)[eids]
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements[eids].ravel(), (G @ src.moment).ravel() / len(eids))
    return b


def _containing_elements(mesh, x, tol=1e-9):
    try:
        locate_points(mesh, x, tol)
    except GeometryError as exc:
        raise GeometryError(f"dipole source outside the mesh: {exc}") from exc
    J = mesh.jacobians
    det = 2.0 * mesh.signed_areas
    r = x - mesh.vertices[:, 0]
    d1 = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
    d2 = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
    lam = np.column_stack([1 - d1 - d2, d1, d2])
    return np.flatnonzero((lam >= -tol).all(axis=1))


def _check_interior(mesh, src):
    eid = _containing_elements(mesh, src.location)[0]
    p = mesh.nodes[mesh.boundary_nodes]
    q = np.roll(p, -1, axis=0)
    d = q - p
    t = np.clip(np.einsum("ij,ij->i", src.location - p, d) / np.einsum("ij,ij->i", d, d), 0, 1)
    dist = np.linalg.norm(src.location - (p + t[:, None] * d), axis=1).min()
    v = mesh.vertices[eid]
    local_h = max(np.linalg.norm(v[1] - v[0]), np.linalg.norm(v[2] - v[1]), np.linalg.norm(v[0] - v[2]))
    if dist <= local_h:
        raise InvalidParameterError(
            f"dipole at distance {dist:.3g} from the boundary; must exceed the local edge length {local_h:.3g}")


def load_vector(mesh: TriMesh, src: Sources) -> np.ndarray:
    return sum((dipole_rhs(mesh, s) for s in _as_list(src)), np.zeros(mesh.n_nodes))


def solve_potential(mesh: TriMesh, src: Sources, K=None) -> np.ndarray:
    """Nodal potential with zero weighted boundary mean.

    The singular Neumann system is grounded at node 0, solved by sparse LU,
    and then shifted by a constant. Every source must lie further than the
    longest edge of its element from the boundary.
    """
    for s in _as_list(src):
        _check_interior(mesh, s)
    if K is None:
        K = assemble_stiffness(mesh)
    b = load_vector(mesh, src)
    N = mesh.n_nodes
    keep = np.ones(N, dtype=bool)
    keep[0] = False
    Kr = K[keep][:, keep].tocsc()
    u = np.zeros(N)
    try:
        u[keep] = spla.splu(Kr).solve(b[keep])
    except RuntimeError as exc:
        raise SolverError(f"stiffness factorisation failed: {exc}") from exc
    w = mesh.boundary_weights
    u -= np.dot(w, u[mesh.boundary_nodes]) / w.sum()
    res = np.linalg.norm(K @ u - b)
    if not np.isfinite(res) or res > RESIDUAL_RTOL * np.linalg.norm(b):
        raise SolverError(f"potential solve residual {res:.3e} exceeds tolerance", residuals={"residual": res})
    return u


def gradient_field(mesh: TriMesh, u) -> np.ndarray:
    """Nodal ``-grad u`` from area-weighted averages of element gradients."""
    u = np.asarray(u, dtype=float)
    if len(u) != mesh.n_nodes:
        raise DimensionMismatchError(f"potential has {len(u)} entries, mesh has {mesh.n_nodes} nodes")
    G = basis_gradients(mesh)
    grad = np.einsum("eik,ei->ek", G, u[mesh.elements])
    area = mesh.areas
    N = mesh.n_nodes
    acc = np.zeros((N, 2))
    wsum = np.zeros(N)
    for k in range(3):
        np.add.at(acc, mesh.elements[:, k], area[:, None] * grad)
        np.add.at(wsum, mesh.elements[:, k], area)
    nodal = -acc / wsum[:, None]
    return np.concatenate([nodal[:, 0], nodal[:, 1]])


@dataclass(frozen=True, eq=False)
class ProjectionMap:
    """Coarse node -> (fine element, barycentric pair)."""

    element_ids: np.ndarray
    bary: np.ndarray
    fine_nodes: np.ndarray
    n_fine: int

    @property
    def weights(self) -> np.ndarray:
        d = self.bary
        return np.column_stack([1.0 - d[:, 0] - d[:, 1], d[:, 0], d[:, 1]])

    def matrix(self) -> sp.csr_matrix:
        """Block-diagonal ``2 N_coarse x 2 N_fine`` interpolation operator."""
        n = len(self.element_ids)
        rows = np.repeat(np.arange(n), 3)
        P = sp.csr_matrix((self.weights.ravel(), (rows, self.fine_nodes.ravel())), shape=(n, self.n_fine))
        return sp.block_diag([P, P], format="csr")


def build_projection(fine: TriMesh, coarse: TriMesh, tol: float = 1e-9) -> ProjectionMap:
    eids, bary = locate_points(fine, coarse.nodes, tol)
    return ProjectionMap(eids, bary, fine.elements[eids], fine.n_nodes)


def project(pmap: ProjectionMap, fine_field) -> np.ndarray:
    f = np.asarray(fine_field, dtype=float)
    if len(f) != 2 * pmap.n_fine:
        raise DimensionMismatchError(f"fine field has length {len(f)}, expected {2 * pmap.n_fine}")
    w = pmap.weights
    fx, fy = f[:pmap.n_fine], f[pmap.n_fine:]
    ex = (w * fx[pmap.fine_nodes]).sum(axis=1)
    ey = (w * fy[pmap.fine_nodes]).sum(axis=1)
    return np.concatenate([ex, ey])


def longitudinal_data(u, layout: ElectrodeLayout, chords: Iterable[Chord]) -> np.ndarray:
    """``u(a) - u(b)`` per chord: the integral of ``-grad u`` from ``a`` to ``b``."""
    u = np.asarray(u, dtype=float)
    ids = layout.mesh_node_ids
    return np.array([u[ids[c.endpoints[0]]] - u[ids[c.endpoints[1]]] for c in chords])


def add_noise(data, snr_db: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Add white Gaussian noise scaled so that the realised SNR equals ``snr_db``.

    ``snr_db = inf`` disables noise.
    """
    data = np.asarray(data, dtype=float)
    norm = np.linalg.norm(data)
    if not norm > 0:
        raise InvalidParameterError("cannot set an SNR relative to zero data")
    if math.isinf(snr_db) and snr_db > 0:
        return data.copy(), np.zeros_like(data)
    g = np.random.default_rng(seed).standard_normal(data.shape)
    noise = g * (norm / (np.linalg.norm(g) * 10.0 ** (snr_db / 20.0)))
    return data + noise, noise

