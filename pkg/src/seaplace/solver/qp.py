"""Equality-constrained convex QP through the bordered KKT system.

    min 1/2 x'Qx + c'x   s.t.  A x = u

The KKT matrix [[Q, A'], [A, 0]] is factorized with a sparse LU after a tiny
diagonal regularization, and the solution is polished by iterative
refinement against the unregularized system.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

REGULARIZATION = 1e-10
TOL = 1e-8


class QpError(ArithmeticError):
    pass


class RankDeficientError(QpError):
    pass


class IndefiniteQpError(QpError):
    pass


@dataclass
class EqConstrainedQp:
    q: sp.spmatrix | np.ndarray
    c: np.ndarray
    a: sp.spmatrix | np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        self.q = sp.csr_matrix(self.q, dtype=float)
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.q.shape[0]
        if self.q.shape != (n, n) or self.c.shape != (n,):
            raise ValueError("q must be n x n and c length n")
        if self.a is None:
            self.a = sp.csr_matrix((0, n))
            self.u = np.zeros(0)
        self.a = sp.csr_matrix(self.a, dtype=float)
        self.u = np.asarray(self.u, dtype=float).ravel()
        if self.a.shape[1] != n or self.a.shape[0] != self.u.shape[0]:
            raise ValueError("a must be m x n and u length m")

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.q @ x) + self.c @ x)


def kkt_residuals(p: EqConstrainedQp, x: np.ndarray, lam: np.ndarray) -> tuple[float, float]:
    """Infinity norms of the stationarity and feasibility residuals."""
    stat = p.q @ x + p.c + (p.a.T @ lam if p.a.shape[0] else 0.0)
    feas = p.a @ x - p.u if p.a.shape[0] else np.zeros(0)
    return float(np.max(np.abs(stat), initial=0.0)), float(np.max(np.abs(feas), initial=0.0))


def _dedup(a: sp.csr_matrix, u: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    seen: dict[bytes, float] = {}
    keep = []
    for i in range(a.shape[0]):
        row = a.getrow(i)
        row.sort_indices()
        key = row.indices.tobytes() + row.data.tobytes()
        if key in seen:
            if abs(seen[key] - u[i]) > TOL * (1.0 + abs(u[i])):
                raise RankDeficientError(f"constraint row {i} repeats an earlier row with a different rhs")
            continue
        seen[key] = u[i]
        keep.append(i)
    return a[keep], u[keep]


def _check_rank(a: sp.csr_matrix) -> None:
    m, n = a.shape
    if m == 0:
        return
    if m > n:
        raise RankDeficientError(f"{m} constraints on {n} variables")
    nnz_rows = np.diff(a.indptr)
    col_use = np.bincount(a.indices, minlength=n)
    if np.all(nnz_rows > 0) and np.all(col_use <= 1):
        return  # rows with disjoint supports are independent
    if m * n <= 4_000_000:
        if np.linalg.matrix_rank(a.toarray()) < m:
            raise RankDeficientError("constraint matrix is rank deficient")


def _check_convex(q: sp.csr_matrix, a: sp.csr_matrix) -> None:
    d = q.diagonal()
    off = np.asarray(abs(q).sum(axis=1)).ravel() - np.abs(d)
    if np.all(d >= off - 1e-12 * (1.0 + np.abs(d))):
        return  # diagonally dominant with nonnegative diagonal
    n = q.shape[0]
    if n > 1500:
        return
    qd = q.toarray()
    z = scipy.linalg.null_space(a.toarray()) if a.shape[0] else np.eye(n)
    if z.shape[1] == 0:
        return
    w = np.linalg.eigvalsh(z.T @ qd @ z)
    if w.min() < -1e-9 * max(1.0, np.abs(w).max()):
        raise IndefiniteQpError(f"reduced Hessian has eigenvalue {w.min():.3g}")


def solve_eq_qp(p: EqConstrainedQp, refine: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x, lam)`` satisfying Qx + c + A'lam = 0 and Ax = u."""
    q = p.q
    if abs(q - q.T).max() > 1e-12 * max(1.0, abs(q).max()):
        raise ValueError("q must be symmetric")
    a, u = _dedup(p.a, p.u)
    _check_rank(a)
    _check_convex(q, a)
    n, m = q.shape[0], a.shape[0]
    k0 = sp.bmat([[q, a.T], [a, None]], format="csc") if m else q.tocsc()
    reg = sp.diags(np.r_[np.full(n, REGULARIZATION), np.full(m, -REGULARIZATION)])
    try:
        lu = splu((k0 + reg).tocsc())
    except RuntimeError as exc:
        raise QpError(f"KKT factorization failed: {exc}") from None
    rhs = np.r_[-p.c, u]
    z = lu.solve(rhs)
    for _ in range(refine):
        r = rhs - k0 @ z
        if np.max(np.abs(r), initial=0.0) <= 1e-14 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
            break
        z = z + lu.solve(r)
    if not np.all(np.isfinite(z)):
        raise QpError("KKT solve produced non-finite values")
    x, lam_d = z[:n], z[n:]
    # map multipliers back onto the caller's (non-deduplicated) rows
    lam = np.zeros(p.a.shape[0])
    if m:
        lam_full, *_ = np.linalg.lstsq(p.a.T.toarray(), -(q @ x + p.c), rcond=None) \
            if p.a.shape[0] != m else (lam_d,)
        lam = np.asarray(lam_full)
    s, f = kkt_residuals(p, x, lam)
    if s > TOL * (1.0 + np.abs(p.c).max(initial=0.0)) or f > TOL * (1.0 + np.abs(p.u).max(initial=0.0)):
        raise QpError(f"KKT residuals too large (stationarity {s:.3g}, feasibility {f:.3g})")
    return x, lam
