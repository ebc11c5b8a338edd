"""
Sparsity-regularised field reconstruction.

Solves::

    min_e  ||R_long e - I||_2^2 + alpha ||R_trans e||_1 + beta ||W e||_1

with ``W = diag(w) D``, ``D`` the vector graph Laplacian of the mesh and ``w``
column-norm based depth weights. The solver is scaled-form ADMM with the split
``z = [R_trans e; W e]``; the quadratic subproblem is diagonalised once per
operator set, so the penalty parameter can change freely.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import DimensionMismatchError, GeometryError, InvalidParameterError, SolverError
from .geometry import TriMesh
from .rays import RayMatrix

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-6
DEFAULT_ALPHA = 0.06
DEFAULT_BETA = 0.016


def build_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """``(De)_i = e_i - mean of e over the edge neighbours of i``, per component."""
    N = mesh.n_nodes
    nbrs = mesh.neighbors
    deg = np.array([len(a) for a in nbrs])
    if np.any(deg == 0):
        raise GeometryError(f"node {int(np.argmax(deg == 0))} has no neighbours")
    rows = np.repeat(np.arange(N), deg)
    cols = np.concatenate(nbrs)
    vals = -1.0 / deg[rows]
    L = sp.csr_matrix((vals, (rows, cols)), shape=(N, N)) + sp.identity(N, format="csr")
    L.sort_indices()
    return sp.block_diag([L, L], format="csr")


def build_weights(R_long: RayMatrix) -> np.ndarray:
    """Depth weights ``1 / (||column_k|| + 1e-6)`` rescaled to unit mean."""
    M = R_long.matrix
    norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=0)).ravel())
    w = 1.0 / (norms + WEIGHT_FLOOR)
    return w / w.mean()


def weighted_laplacian(D: sp.csr_matrix, w) -> sp.csr_matrix:
    return (sp.diags(np.asarray(w, dtype=float)) @ D).tocsr()


@dataclass
class SolverOptions:
    """ADMM settings.

    ``rho=None`` picks ``rho_factor`` times the geometric mean of the
    generalised eigenvalues of ``(2 R_long^T R_long, A^T A)``. With ``balance`` the
    Laplacian split is rescaled so its rows have the same mean norm as the
    transverse rows; this changes the iteration, not the problem.
    """
    rel_tol: float = 1e-6
    abs_tol: float = 0.0
    max_iters: int = 20000
    rho: Optional[float] = None
    rho_factor: float = 3.0
    adaptive_rho: bool = False
    adapt_every: int = 50
    over_relaxation: float = 1.6
    balance: bool = True


@dataclass
class SolveReport:
    objective: float
    fidelity: float
    l1_transverse: float
    l1_laplace: float
    iterations: int
    primal_residual: float
    dual_residual: float
    seconds: float
    converged: bool
    rho: float = float("nan")
    history: List[float] = field(default_factory=list, repr=False)


def objective_terms(R_long, R_trans, W, I, e) -> Tuple[float, float, float]:
    r = _mat(R_long) @ e - I
    return float(r @ r), float(np.abs(_mat(R_trans) @ e).sum()), float(np.abs(W @ e).sum())


def _mat(R):
    return R.matrix if isinstance(R, RayMatrix) else R


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _mean_row_norm(M):
    M = sp.csr_matrix(M)
    return float(np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel()).mean())


class ADMMSolver:
    """Scaled-form ADMM for ``||R_long e - I||^2 + alpha ||R_trans e||_1 + beta ||W e||_1``.

    The splits are ``z1 = R_trans e`` and ``z2 = c W e`` (``c`` a fixed
    balancing scale, thresholds divided by ``c`` to match). The e-update
    matrix ``2 R_long^T R_long + rho A^T A`` with ``A = [R_trans; c W]`` is
    diagonalised once through a generalised eigenproblem; afterwards a change of ``rho``
    costs nothing and several data vectors can be iterated together, each
    with its own ``rho``, using matrix-matrix products.
    """

    def __init__(self, R_long, R_trans, W, options: Optional[SolverOptions] = None):
        self.options = options or SolverOptions()
        self.Rl = sp.csr_matrix(_mat(R_long))
        self.Rt = sp.csr_matrix(_mat(R_trans))
        self.W = sp.csr_matrix(W)
        m, n = self.Rl.shape
        if self.Rt.shape != (m, n) or self.W.shape != (n, n):
            raise DimensionMismatchError(
                f"inconsistent shapes: R_long {self.Rl.shape}, R_trans {self.Rt.shape}, W {self.W.shape}")
        self.m, self.n = m, n
        self.scale = 1.0
        if self.options.balance:
            rt, rw = _mean_row_norm(self.Rt), _mean_row_norm(self.W)
            if rt > 0 and rw > 0:
                self.scale = rt / rw
        self.A = sp.vstack([self.Rt, self.scale * self.W], format="csr")
        self.At = self.A.T.tocsr()
        self._eig = None
        self._dense_Rl = None

    def _eigen(self):
        # 2 Rl^T Rl v = mu B v with B = 2 Rl^T Rl + A^T A, so the e-update
        # matrix is V^-T diag(mu + rho (1 - mu)) V^-1; B is definite whenever
        # the update is well posed, even if A^T A alone is singular.
        if self._eig is None:
            RtR2 = 2.0 * (self.Rl.T @ self.Rl).toarray()
            B = RtR2 + (self.At @ self.A).toarray()
            try:
                mu, V = la.eigh(RtR2, B, check_finite=False)
            except la.LinAlgError as exc:
                raise SolverError(f"e-update is singular (common null space): {exc}") from exc
            mu = np.clip(mu, 0.0, 1.0)
            self._eig = (mu, np.ascontiguousarray(V), np.ascontiguousarray(V.T))
        return self._eig

    def initial_rho(self) -> float:
        if self.options.rho is not None:
            return float(self.options.rho)
        mu = self._eigen()[0]
        ok = (mu > 1e-12) & (mu < 1 - 1e-12)
        if not ok.any():
            return 1.0
        lam = mu[ok] / (1.0 - mu[ok])
        return self.options.rho_factor * float(np.exp(np.log(lam).mean()))

    def solve(self, I, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA) -> Tuple[np.ndarray, SolveReport]:
        I = np.asarray(I, dtype=float)
        if I.shape != (self.m,):
            raise DimensionMismatchError(f"data has shape {I.shape}, expected ({self.m},)")
        return self.solve_many(I[:, None], alpha, beta)[0]

    def solve_many(self, I, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA) -> List[Tuple[np.ndarray, SolveReport]]:
        """Solve for every column of ``I`` (shape ``(m, k)``); one result per column.

        Columns are iterated independently; batching only shares the dense
        products. Raises :class:`SolverError` if any column fails to converge.
        """
        opts = self.options
        t0 = time.perf_counter()
        I = np.asarray(I, dtype=float)
        m, n = self.m, self.n
        if I.ndim != 2 or I.shape[0] != m:
            raise DimensionMismatchError(f"data has shape {I.shape}, expected ({m}, k)")
        if not np.all(np.isfinite(I)):
            raise InvalidParameterError("data contains non-finite values")
        if not (alpha >= 0 and beta >= 0):
            raise InvalidParameterError("alpha and beta must be non-negative")
        k = I.shape[1]
        Rl, A, At = self.Rl, self.A, self.At

        if alpha == 0 and beta == 0:
            if self._dense_Rl is None:
                self._dense_Rl = Rl.toarray()
            E = la.lstsq(self._dense_Rl, I, lapack_driver="gelsd")[0]
            out = []
            for j in range(k):
                fid, l1t, l1w = objective_terms(Rl, self.Rt, self.W, I[:, j], E[:, j])
                out.append((E[:, j].copy(), SolveReport(fid, fid, l1t, l1w, 0, 0.0, 0.0,
                                                        time.perf_counter() - t0, True, history=[fid])))
            return out

        mu, V, Vt = self._eigen()
        p = A.shape[0]
        thresh = np.concatenate([np.full(m, float(alpha)), np.full(n, float(beta) / self.scale)])[:, None]
        w_obj = np.concatenate([np.full(m, float(alpha)), np.full(n, float(beta) / self.scale)])
        gamma = opts.over_relaxation

        B0 = 2.0 * (Rl.T @ I)
        rho = np.full(k, self.initial_rho())
        Z = np.zeros((p, k))
        U = np.zeros((p, k))
        best_E = np.zeros((n, k))
        best_obj = np.full(k, np.inf)
        histories = [[] for _ in range(k)]
        active = np.arange(k)
        results: List[Optional[Tuple[np.ndarray, SolveReport]]] = [None] * k
        r_norm = np.full(k, np.inf)
        s_norm = np.full(k, np.inf)

        for it in range(1, opts.max_iters + 1):
            rh = rho[active]
            E = V @ ((Vt @ (B0[:, active] + rh * (At @ (Z - U)))) / (mu[:, None] + rh * (1.0 - mu[:, None])))
            AE = A @ E
            AE_hat = gamma * AE + (1.0 - gamma) * Z
            Z_old = Z
            Z = _soft(AE_hat + U, thresh / rh)
            U = U + AE_hat - Z

            res = Rl @ E - I[:, active]
            obj = (res * res).sum(axis=0) + w_obj @ np.abs(AE)
            better = obj < best_obj[active]
            if better.any():
                cols = active[better]
                best_obj[cols] = obj[better]
                best_E[:, cols] = E[:, better]
            for j, c in enumerate(active):
                histories[c].append(best_obj[c])

            r = np.linalg.norm(AE - Z, axis=0)
            s = rh * np.linalg.norm(At @ (Z - Z_old), axis=0)
            eps_pri = np.sqrt(p) * opts.abs_tol + opts.rel_tol * np.maximum(
                np.linalg.norm(AE, axis=0), np.linalg.norm(Z, axis=0))
            eps_dual = np.sqrt(n) * opts.abs_tol + opts.rel_tol * rh * np.linalg.norm(At @ U, axis=0)
            r_norm[active], s_norm[active] = r, s
            done = (r <= eps_pri) & (s <= eps_dual)

            if done.any():
                for j in np.flatnonzero(done):
                    c = active[j]
                    results[c] = self._report(I[:, c], best_E[:, c], alpha, beta, it, r[j], s[j],
                                              time.perf_counter() - t0, rho[c], histories[c])
                keep = ~done
                active, Z, U = active[keep], Z[:, keep], U[:, keep]
                if not len(active):
                    break
                eps_pri, eps_dual, r, s = eps_pri[keep], eps_dual[keep], r[keep], s[keep]

            if opts.adaptive_rho and it % opts.adapt_every == 0:
                # residual balancing on the tolerance-normalised residuals
                ratio = (r / np.maximum(eps_pri, 1e-300)) / np.maximum(s / np.maximum(eps_dual, 1e-300), 1e-300)
                up, down = ratio > 10.0, ratio < 0.1
                factor = np.where(up, 2.0, np.where(down, 0.5, 1.0))
                rho[active] *= factor
                U = U / factor

        if len(active):
            c = int(active[0])
            raise SolverError(
                f"ADMM did not converge in {opts.max_iters} iterations "
                f"(realization {c}: primal {r_norm[c]:.3e}, dual {s_norm[c]:.3e})",
                residuals={"primal": float(r_norm[c]), "dual": float(s_norm[c])})
        return results

    def _report(self, I, e, alpha, beta, it, r, s, seconds, rho, history):
        fid, l1t, l1w = objective_terms(self.Rl, self.Rt, self.W, I, e)
        rep = SolveReport(fid + alpha * l1t + beta * l1w, fid, l1t, l1w, it,
                          float(r), float(s), seconds, True, float(rho), history)
        logger.debug("ADMM converged in %d iterations, objective %.6g", it, rep.objective)
        return e.copy(), rep


def solve(R_long, R_trans, W, I, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA,
          options: Optional[SolverOptions] = None) -> Tuple[np.ndarray, SolveReport]:
    """Reconstruct the nodal field from longitudinal data ``I``.

    Returns the best iterate by objective value together with a
    :class:`SolveReport`; ``report.history`` holds that running best, which
    is non-increasing by construction. With ``alpha = beta = 0`` the problem
    is plain least squares and the minimum-norm solution is returned.
    Use :class:`ADMMSolver` directly to reuse the operator set-up across
    several data vectors.
    """
    return ADMMSolver(R_long, R_trans, W, options).solve(I, alpha, beta)


def transverse_profile(R_trans, e) -> np.ndarray:
    return _mat(R_trans) @ np.asarray(e, dtype=float)
