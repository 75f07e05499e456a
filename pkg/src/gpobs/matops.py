"""Dense linear-algebra kernels and the positive/negative matrix splitting.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The kernels here
are deliberately small and deterministic: cyclic Jacobi for symmetric
eigenvalues, LU with partial pivoting for linear solves, and a shifted power
iteration (with an M-matrix bisection fallback) for Perron roots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IntervalError, SingularMatrixError, SymmetryError

PD_MARGIN = 1e-9


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float64 array."""
    a = np.array(M, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_vector(v, name="vector"):
    a = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class MatrixSplit:
    """Entrywise positive part, negative part and absolute value of a matrix."""

    plus: np.ndarray
    minus: np.ndarray
    abs: np.ndarray


def split(M) -> MatrixSplit:
    """Split ``M`` into ``plus = max(M, 0)``, ``minus = plus - M``, ``abs = plus + minus``."""
    M = as_matrix(M)
    plus = np.maximum(M, 0.0)
    minus = plus - M
    return MatrixSplit(plus=plus, minus=minus, abs=plus + minus)


def interval_mat_vec(A, lo, hi):
    """Tight enclosure of ``{A x : lo <= x <= hi}``.

    Returns ``(A+ lo - A- hi, A+ hi - A- lo)``.
    """
    A = as_matrix(A, "A")
    lo = as_vector(lo, "lo")
    hi = as_vector(hi, "hi")
    if lo.shape != hi.shape or A.shape[1] != lo.shape[0]:
        raise DimensionError(
            f"cannot bound {A.shape} matrix times interval of length {lo.shape[0]}/{hi.shape[0]}"
        )
    if np.any(lo > hi):
        raise IntervalError(f"lo > hi at index {int(np.argmax(lo > hi))}")
    s = split(A)
    return s.plus @ lo - s.minus @ hi, s.plus @ hi - s.minus @ lo


# ---------------------------------------------------------------------------
# symmetric eigenproblems
# ---------------------------------------------------------------------------

def jacobi_eigh(S, vectors=False, tol=1e-15, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    S : array_like
        Symmetric matrix; only its symmetric part is used.
    vectors : bool
        Also accumulate the eigenvectors.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol * ||S||_F``.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray, optional
        Orthonormal eigenvectors as columns (only if ``vectors``).
    """
    a = as_matrix(S, "S")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"S must be square, got {a.shape}")
    a = 0.5 * (a + a.T)
    amax = float(np.abs(a).max()) if a.size else 0.0
    if amax > 0.0:
        a = a / amax  # keeps the norms below from overflowing
    V = np.eye(n) if vectors else None
    scale = math.sqrt(float(np.sum(a * a)))
    if n > 1 and scale > 0.0:
        threshold = tol * scale
        for _ in range(max_sweeps):
            off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
            if off <= threshold:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if abs(apq) <= 1e-300:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if abs(theta) > 1e150:
                        t = 0.5 / theta
                    else:
                        t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    ap = a[:, p].copy()
                    aq = a[:, q]
                    a[:, p] = c * ap - s * aq
                    a[:, q] = s * ap + c * aq
                    ap = a[p, :].copy()
                    aq = a[q, :]
                    a[p, :] = c * ap - s * aq
                    a[q, :] = s * ap + c * aq
                    a[p, q] = a[q, p] = 0.0
                    if V is not None:
                        vp = V[:, p].copy()
                        vq = V[:, q]
                        V[:, p] = c * vp - s * vq
                        V[:, q] = s * vp + c * vq
    w = np.diag(a) * amax
    order = np.argsort(w, kind="stable")
    if vectors:
        return w[order], V[:, order]
    return w[order]


def _check_symmetric(S, asym_tol):
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"S must be square, got {S.shape}")
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > asym_tol * max(1.0, float(np.max(np.abs(S)))):
        raise SymmetryError(f"matrix asymmetry {asym:.3e} exceeds {asym_tol:g}")
    return 0.5 * (S + S.T)


def sym_eig_min(S, asym_tol=1e-9) -> float:
    """Smallest eigenvalue of a symmetric matrix (cyclic Jacobi)."""
    S = _check_symmetric(S, asym_tol)
    return float(jacobi_eigh(S)[0])


def is_positive_definite(S, margin=PD_MARGIN) -> bool:
    return sym_eig_min(S) > margin


def cholesky_pivots(S, asym_tol=1e-9):
    """Pivots of an unpivoted Cholesky-style (LDL^T) elimination of ``S``.

    The elimination stops at the first non-positive pivot; a matrix is
    positive definite exactly when all ``n`` pivots are returned positive.
    """
    a = _check_symmetric(S, asym_tol).copy()
    n = a.shape[0]
    pivots = []
    for k in range(n):
        d = a[k, k]
        pivots.append(float(d))
        if d <= 0.0:
            break
        col = a[k + 1:, k] / d
        a[k + 1:, k + 1:] -= np.outer(col, a[k, k + 1:])
    return np.array(pivots)


def cholesky_positive(S) -> bool:
    p = cholesky_pivots(S)
    return len(p) == np.shape(S)[0] and bool(np.all(p > 0.0))


def sigma_max(M) -> float:
    """Largest singular value, from the Jacobi spectrum of the smaller Gram matrix."""
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    G = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    if G.shape == (1, 1):
        return math.sqrt(max(float(G[0, 0]), 0.0))
    lam = jacobi_eigh(G)[-1]
    return math.sqrt(max(float(lam), 0.0))


def sigma_min(M) -> float:
    """Smallest singular value over ``min(rows, cols)`` values."""
    M = as_matrix(M)
    G = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    lam = jacobi_eigh(G)[0]
    return math.sqrt(max(float(lam), 0.0))


# ---------------------------------------------------------------------------
# nonnegative matrices
# ---------------------------------------------------------------------------

def _is_nonsingular_m_matrix(B) -> bool:
    # For a Z-matrix, unpivoted elimination has positive pivots iff all leading
    # principal minors are positive iff B is a nonsingular M-matrix.
    a = np.array(B, dtype=float)
    n = a.shape[0]
    for k in range(n):
        d = a[k, k]
        if not d > 0.0:
            return False
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k] / d, a[k, k + 1:])
    return True


def _perron_bisect(M, lo, hi, rtol):
    n = M.shape[0]
    eye = np.eye(n)
    while not _is_nonsingular_m_matrix(hi * eye - M):
        hi = 2.0 * hi + 1.0
    for _ in range(200):
        if hi - lo <= rtol * hi or hi - lo <= 1e-300:
            break
        mid = 0.5 * (lo + hi)
        if _is_nonsingular_m_matrix(mid * eye - M):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def spectral_radius_nonneg(M, rtol=1e-10, max_iter=5000) -> float:
    """Perron root of an entrywise nonnegative square matrix.

    Runs power iteration on ``M + I`` (which keeps the iterate strictly
    positive) and brackets the root with Collatz-Wielandt bounds. When the
    bracket stops shrinking, the remaining bracket is bisected using the
    M-matrix test ``t I - M``.
    """
    M = as_matrix(M)
    n = M.shape[0]
    if M.shape[1] != n:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    if np.any(M < 0.0):
        raise ValueError("spectral_radius_nonneg requires an entrywise nonnegative matrix")
    if not np.any(M):
        return 0.0
    x = np.ones(n)
    lo, hi = 0.0, float(np.max(M.sum(axis=1)))
    stalled = 0
    width = hi - lo
    for _ in range(max_iter):
        y = M @ x + x
        ratios = y / x
        lo = max(lo, float(ratios.min()) - 1.0)
        hi = min(hi, float(ratios.max()) - 1.0)
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi)
        if hi - lo > 0.999 * width:
            stalled += 1
            if stalled >= 50:
                break
        else:
            stalled = 0
        width = hi - lo
        x = y / y.max()
    return _perron_bisect(M, max(lo, 0.0), max(hi, 0.0), rtol)


def is_schur_stable(M, max_squarings=40) -> bool:
    """True when every eigenvalue of ``M`` lies strictly inside the unit circle.

    Uses ``rho(M) < 1  <=>  ||M^k|| < 1`` for some ``k``, probing powers
    ``M^(2^j)`` by repeated squaring with rescaling to avoid overflow.
    """
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"stability test needs a square matrix, got {M.shape}")
    if M.size == 0:
        return True
    if not np.any(M < 0.0):
        return spectral_radius_nonneg(M) < 1.0
    P = M.copy()
    log_scale = 0.0  # M^(2^j) = exp(log_scale) * P
    for _ in range(max_squarings):
        nrm = float(np.max(np.abs(P).sum(axis=1)))
        if nrm == 0.0:
            return True
        if math.log(nrm) + log_scale < 0.0:
            return True
        P = P / nrm
        log_scale += math.log(nrm)
        P = P @ P
        log_scale *= 2.0
    return False


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------

def lu_factor(A, pivot_tol=1e-12):
    """LU factorisation with partial pivoting, ``P A = L U`` packed in one array."""
    a = as_matrix(A, "A").copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"A must be square, got {a.shape}")
    row_max = np.max(np.abs(a), axis=1) if n else np.zeros(0)
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        ref = row_max[perm[k]]
        if ref == 0.0 or abs(a[k, k]) <= pivot_tol * ref:
            raise SingularMatrixError(f"matrix is singular to tolerance at pivot {k}", pivot=k)
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def lu_solve(lu, perm, B):
    b = np.array(B, dtype=float)
    vec = b.ndim == 1
    x = b.reshape(b.shape[0], -1)[perm].copy()
    n = lu.shape[0]
    for k in range(n):
        x[k + 1:] -= np.outer(lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):
        x[k] -= lu[k, k + 1:] @ x[k + 1:]
        x[k] /= lu[k, k]
    return x.reshape(-1) if vec else x


def solve(A, B, pivot_tol=1e-12):
    """Solve ``A X = B`` by LU with partial pivoting."""
    A = as_matrix(A, "A")
    B = np.array(B, dtype=float)
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"A is {A.shape} but B has {B.shape[0]} rows")
    lu, perm = lu_factor(A, pivot_tol)
    return lu_solve(lu, perm, B)


def block_diag(*blocks):
    blocks = [as_matrix(b) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
