"""Desk-scale dense linear algebra backing the vector extrapolation methods.

Hand-rolled on numpy array primitives: modified Gram-Schmidt QR with one
reorthogonalization pass, partially pivoted LU with growth monitoring,
QR-based least squares with a minimum-norm fallback, a one-sided Jacobi
SVD, and an Arnoldi-based GMRES reference used only as a test oracle.

Matrices are plain 2-D float64 numpy arrays (stored column-major
internally); vectors are 1-D arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_POLICY, BreakdownPolicy, breakdown_check

__all__ = [
    "GmresTrace",
    "LeastSquaresFit",
    "QrFactors",
    "RankDeficiencyError",
    "SvdConvergenceError",
    "SvdFactors",
    "gmres_oracle",
    "jacobi_svd",
    "least_squares",
    "lu_solve",
    "qr_mgs",
]

#: Element-growth ratio in LU beyond which a stability warning is emitted.
_GROWTH_WARN = 1e8


class RankDeficiencyError(ArithmeticError):
    """A factorization met a column with no usable remaining component."""

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


class SvdConvergenceError(ArithmeticError):
    """Jacobi sweeps hit the cap before reaching the rotation tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class QrFactors:
    """Thin QR factorization A = Q R with orthonormal columns in Q."""
    q: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD A = U diag(sigma) V^T with sigma descending."""
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class LeastSquaresFit:
    """Solution of min ||b - A theta||_2.

    ``rank_deficient`` flags that the minimum-norm fallback path ran.
    """
    coefficients: np.ndarray
    residual_norm: float
    rank_deficient: bool = False


@dataclass(frozen=True)
class GmresTrace:
    """Residual-norm history ||r_j|| for j = 0..k; ``exact`` marks a happy
    breakdown (the Krylov space contained the solution before step k)."""
    residual_norms: np.ndarray
    exact: bool = False


def _as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.float64, order="F")
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError("expected a 2-D matrix with at least one row and column")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def _as_vector(b, length: int | None = None) -> np.ndarray:
    v = np.array(b, dtype=np.float64).reshape(-1)
    if length is not None and v.shape[0] != length:
        raise ValueError(f"vector length {v.shape[0]}, expected {length}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def qr_mgs(a, policy: BreakdownPolicy = DEFAULT_POLICY) -> QrFactors:
    """Thin QR by modified Gram-Schmidt with one reorthogonalization pass.

    Requires rows >= cols.  Raises :class:`RankDeficiencyError` when a
    diagonal of R fails the breakdown check against the original column
    norm (the column lies numerically in the span of its predecessors).
    """
    a = _as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ValueError("qr_mgs requires rows >= cols")
    q = np.zeros((m, n))
    r = np.zeros((n, n))
    col_norms = np.linalg.norm(a, axis=0)
    for j in range(n):
        v = a[:, j].copy()
        for i in range(j):
            r[i, j] = q[:, i] @ v
            v -= r[i, j] * q[:, i]
        for i in range(j):  # second pass restores orthogonality
            c = q[:, i] @ v
            r[i, j] += c
            v -= c * q[:, i]
        norm = np.linalg.norm(v)
        if not breakdown_check(norm, col_norms[j], policy):
            raise RankDeficiencyError(
                f"column {j} is numerically dependent on earlier columns",
                column=j)
        r[j, j] = norm
        q[:, j] = v / norm
    return QrFactors(q=q, r=r)


def _solve_upper(r: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = r.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (c[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def _solve_lower_unit(l: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = l.shape[0]
    x = np.zeros_like(c)
    for i in range(n):
        x[i] = c[i] - l[i, :i] @ x[:i]
    return x


def lu_solve(a, b, policy: BreakdownPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve A X = B by LU with partial pivoting; element growth is monitored.

    B may be a vector or a matrix of right-hand sides; the result matches
    its shape.  A singular pivot raises :class:`RankDeficiencyError`.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("lu_solve requires a square matrix")
    b_arr = np.array(b, dtype=np.float64)
    vector_rhs = b_arr.ndim == 1
    if b_arr.shape[0] != n:
        raise ValueError("right-hand side rows must match matrix order")
    rhs = b_arr.reshape(n, -1) if vector_rhs else _as_matrix(b_arr)

    lu = a.copy()
    perm = np.arange(n)
    scale = np.max(np.abs(a))
    for j in range(n):
        p = j + int(np.argmax(np.abs(lu[j:, j])))
        if not breakdown_check(abs(lu[p, j]), scale, policy):
            raise RankDeficiencyError(f"singular pivot at column {j}", column=j)
        if p != j:
            lu[[j, p], :] = lu[[p, j], :]
            perm[[j, p]] = perm[[p, j]]
        lu[j + 1:, j] /= lu[j, j]
        lu[j + 1:, j + 1:] -= np.outer(lu[j + 1:, j], lu[j, j + 1:])
    growth = np.max(np.abs(np.triu(lu))) / scale if scale > 0 else 1.0
    if growth > _GROWTH_WARN:
        warnings.warn(
            f"large element growth ({growth:.2e}) in pivoted LU; "
            "the computed solution may be inaccurate", RuntimeWarning)

    x = np.empty_like(rhs)
    for col in range(rhs.shape[1]):
        y = _solve_lower_unit(lu, rhs[perm, col])
        x[:, col] = _solve_upper(np.triu(lu), y)
    return x[:, 0] if vector_rhs else x


def _determinant(a) -> float:
    """Determinant by partially pivoted elimination (0.0 on a zero pivot)."""
    m = _as_matrix(a).copy()
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("determinant requires a square matrix")
    sign = 1.0
    for j in range(n):
        p = j + int(np.argmax(np.abs(m[j:, j])))
        if m[p, j] == 0.0:
            return 0.0
        if p != j:
            m[[j, p], :] = m[[p, j], :]
            sign = -sign
        m[j + 1:, j + 1:] -= np.outer(m[j + 1:, j] / m[j, j], m[j, j + 1:])
    return sign * float(np.prod(np.diag(m)))


def least_squares(a, b, policy: BreakdownPolicy = DEFAULT_POLICY) -> LeastSquaresFit:
    """Minimize ||b - A theta||_2 via MGS QR.

    On rank deficiency the solver falls back to greedy column-pivoted
    Gram-Schmidt and returns the minimum-norm solution (second QR of the
    transposed leading block), flagged in the result.
    """
    a = _as_matrix(a)
    m, n = a.shape
    b = _as_vector(b, m)
    if m < n:
        raise ValueError("least_squares requires rows >= cols")
    try:
        f = qr_mgs(a, policy)
        theta = _solve_upper(f.r, f.q.T @ b)
        deficient = False
    except RankDeficiencyError:
        theta = _min_norm_solution(a, b, policy)
        deficient = True
    residual = float(np.linalg.norm(b - a @ theta))
    return LeastSquaresFit(coefficients=theta, residual_norm=residual,
                           rank_deficient=deficient)


def _min_norm_solution(a: np.ndarray, b: np.ndarray,
                       policy: BreakdownPolicy) -> np.ndarray:
    """Minimum-norm least-squares solution via column-pivoted MGS."""
    m, n = a.shape
    work = a.copy()
    q = np.zeros((m, n))
    r = np.zeros((n, n))
    piv = np.arange(n)
    overall = float(np.max(np.linalg.norm(a, axis=0), initial=0.0))
    rank = 0
    for j in range(n):
        norms = np.linalg.norm(work[:, j:], axis=0)
        p = j + int(np.argmax(norms))
        if not breakdown_check(norms[p - j], overall, policy):
            break
        work[:, [j, p]] = work[:, [p, j]]
        r[:, [j, p]] = r[:, [p, j]]
        piv[[j, p]] = piv[[p, j]]
        # the working column was already orthogonalized by the deferred
        # updates below; one accumulating pass restores orthogonality
        v = work[:, j].copy()
        for i in range(j):
            c = q[:, i] @ v
            r[i, j] += c
            v -= c * q[:, i]
        nv = np.linalg.norm(v)
        q[:, j] = v / nv
        r[j, j] = nv
        for rest in range(j + 1, n):
            proj = q[:, j] @ work[:, rest]
            r[j, rest] = proj
            work[:, rest] -= proj * q[:, j]
        rank = j + 1
    if rank == 0:
        return np.zeros(n)
    # A P = Q [R1; 0] with R1 = r[:rank]; minimum-norm w solves R1 w = c
    # with w in the row space of R1: factor R1^T = Q2 R2 and back-substitute.
    r1 = r[:rank, :]
    c = q[:, :rank].T @ b
    f2 = qr_mgs(r1.T, policy)
    w = f2.q @ _solve_lower_unit_from_upper_t(f2.r, c)
    theta = np.zeros(n)
    theta[piv] = w
    return theta


def _solve_lower_unit_from_upper_t(r_upper: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve R^T z = c for upper-triangular R (forward substitution)."""
    n = r_upper.shape[0]
    z = np.zeros(n)
    for i in range(n):
        z[i] = (c[i] - r_upper[:i, i] @ z[:i]) / r_upper[i, i]
    return z


def jacobi_svd(a, rotation_tol: float = 1e-14, max_sweeps: int = 60) -> SvdFactors:
    """Thin SVD by one-sided Jacobi rotations on column pairs.

    Sweeps continue until every pairwise column inner product is below
    ``rotation_tol`` relative to the column norms, or the sweep cap is
    reached (then :class:`SvdConvergenceError` reports the achieved
    tolerance).  Requires rows >= cols and cols <= 1200.
    """
    a = _as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ValueError("jacobi_svd requires rows >= cols (transpose first)")
    if n > 1200:
        raise ValueError("jacobi_svd is desk-scale only (cols <= 1200)")
    w = a.copy()
    v = np.eye(n)
    worst = 0.0
    for _ in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q_ in range(p + 1, n):
                app = w[:, p] @ w[:, p]
                aqq = w[:, q_] @ w[:, q_]
                apq = w[:, p] @ w[:, q_]
                denom = np.sqrt(app * aqq)
                if denom == 0.0:
                    continue
                rel = abs(apq) / denom
                worst = max(worst, rel)
                if rel <= rotation_tol:
                    continue
                zeta = (aqq - app) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                if zeta == 0.0:
                    t = 1.0
                cs = 1.0 / np.hypot(1.0, t)
                sn = cs * t
                wp = w[:, p].copy()
                w[:, p] = cs * wp - sn * w[:, q_]
                w[:, q_] = sn * wp + cs * w[:, q_]
                vp = v[:, p].copy()
                v[:, p] = cs * vp - sn * v[:, q_]
                v[:, q_] = sn * vp + cs * v[:, q_]
        if worst <= rotation_tol:
            break
    else:
        raise SvdConvergenceError(
            f"one-sided Jacobi did not converge in {max_sweeps} sweeps "
            f"(achieved relative rotation {worst:.3e})", achieved=worst)

    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    u = np.zeros((m, n))
    for j in range(n):
        if sigma[j] > 0.0:
            u[:, j] = w[:, j] / sigma[j]
    _complete_orthonormal(u, sigma)
    return SvdFactors(u=u, sigma=sigma, v=v)


def _complete_orthonormal(u: np.ndarray, sigma: np.ndarray) -> None:
    """Fill columns of u belonging to zero singular values orthonormally."""
    m = u.shape[0]
    for j in np.nonzero(sigma == 0.0)[0]:
        for cand in range(m):
            vec = np.zeros(m)
            vec[cand] = 1.0
            vec -= u @ (u.T @ vec)
            norm = np.linalg.norm(vec)
            if norm > 0.5:  # canonical vector mostly outside current span
                u[:, j] = vec / norm
                break


def gmres_oracle(a, b, k: int) -> GmresTrace:
    """Residual norms of GMRES over K_j(A, b), j = 0..k, from x_0 = 0.

    ``a`` may be a dense matrix or a callable applying the operator.
    A happy breakdown (invariant Krylov space) ends the trace early with
    ``exact=True``.  Test oracle only — not a user-facing solver.
    """
    apply_a = a if callable(a) else (lambda x, _m=_as_matrix(a): _m @ x)
    b = _as_vector(b)
    dim = b.shape[0]
    if not 0 <= k <= dim:
        raise ValueError("gmres_oracle requires 0 <= k <= dimension")
    beta = float(np.linalg.norm(b))
    norms = [beta]
    if beta == 0.0 or k == 0:
        return GmresTrace(np.array(norms), exact=(beta == 0.0))
    basis = [b / beta]
    h = np.zeros((k + 1, k))
    exact = False
    for j in range(k):
        wv = _as_vector(apply_a(basis[j]), dim)
        for i in range(j + 1):
            h[i, j] = basis[i] @ wv
            wv -= h[i, j] * basis[i]
        for i in range(j + 1):  # reorthogonalize for oracle-grade accuracy
            c = basis[i] @ wv
            h[i, j] += c
            wv -= c * basis[i]
        h[j + 1, j] = np.linalg.norm(wv)
        rhs = np.zeros(j + 2)
        rhs[0] = beta
        y = np.linalg.lstsq(h[:j + 2, :j + 1], rhs, rcond=None)[0]
        norms.append(float(np.linalg.norm(rhs - h[:j + 2, :j + 1] @ y)))
        if h[j + 1, j] <= 1e-14 * max(beta, 1.0):
            exact = True
            break
        basis.append(wv / h[j + 1, j])
    return GmresTrace(np.array(norms), exact=exact)
