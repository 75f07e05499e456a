import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpobs import matops
from gpobs.errors import DimensionError, IntervalError, SingularMatrixError, SymmetryError

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def small_matrices(max_n=5):
    return st.integers(1, max_n).flatmap(lambda n: arrays(float, (n, n), elements=finite))


# ---------------------------------------------------------------------------
# independent oracles


def sylvester_min_eig(S, tol=1e-12):
    """Smallest eigenvalue by bisection on the inertia of S - x I (count of negative LDL^T pivots)."""
    n = S.shape[0]

    def n_below(x):
        d_prev, count = None, 0
        M = S - x * np.eye(n)
        D = np.zeros(n)
        Lm = np.eye(n)
        for j in range(n):
            D[j] = M[j, j] - np.sum(Lm[j, :j] ** 2 * D[:j])
            if D[j] == 0:
                D[j] = 1e-300
            for i in range(j + 1, n):
                Lm[i, j] = (M[i, j] - np.sum(Lm[i, :j] * Lm[j, :j] * D[:j])) / D[j]
            count += D[j] < 0
        return count

    r = np.abs(S).sum(axis=1).max() + 1.0
    lo, hi = -r, r
    while hi - lo > tol * max(1.0, r):
        mid = 0.5 * (lo + hi)
        if n_below(mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def faddeev_leverrier_radius(M):
    """Spectral radius from the characteristic polynomial built by Faddeev-LeVerrier, roots by np.roots."""
    n = M.shape[0]
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    c = 1.0
    for k in range(1, n + 1):
        Mk = M @ Mk + c * np.eye(n)
        c = -np.trace(M @ Mk) / k
        coeffs.append(c)
    return float(np.max(np.abs(np.roots(coeffs))))


def power_radius(M, iters=20000):
    x = np.ones(M.shape[0])
    B = M + np.eye(M.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = B @ x
        lam = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
    return lam - 1.0


# ---------------------------------------------------------------------------


@given(small_matrices())
def test_split_identities(M):
    s = matops.split(M)
    assert np.all(s.plus >= 0) and np.all(s.minus >= 0)
    assert np.array_equal(s.plus - s.minus, M)
    assert np.array_equal(s.abs, np.abs(M))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_interval_mat_vec_encloses_and_is_tight(n, m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, m))
    lo = rng.normal(size=m)
    hi = lo + rng.uniform(0, 2, size=m)
    blo, bhi = matops.interval_mat_vec(A, lo, hi)
    xs = lo + (hi - lo) * rng.random((50, m))
    ys = xs @ A.T
    assert np.all(ys >= blo - 1e-12) and np.all(ys <= bhi + 1e-12)
    # tightness: the corner choosing hi where A>0 attains the upper bound of row 0
    corner = np.where(A[0] > 0, hi, lo)
    assert A[0] @ corner == pytest.approx(bhi[0], abs=1e-12)


def test_interval_mat_vec_errors():
    with pytest.raises(IntervalError):
        matops.interval_mat_vec(np.eye(2), [1, 0], [0, 1])
    with pytest.raises(DimensionError):
        matops.interval_mat_vec(np.eye(2), [0, 0, 0], [1, 1, 1])


@settings(max_examples=60)
@given(st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
def test_jacobi_matches_inertia_bisection(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    S = B + B.T
    w = matops.jacobi_eigh(S)
    assert np.all(np.diff(w) >= 0)
    assert w[0] == pytest.approx(sylvester_min_eig(S), abs=1e-9)
    assert np.allclose(w, np.linalg.eigvalsh(S), atol=1e-10)


def test_jacobi_vectors_reconstruct():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(6, 6))
    S = B @ B.T
    w, V = matops.jacobi_eigh(S, vectors=True)
    assert np.allclose(V.T @ V, np.eye(6), atol=1e-12)
    assert np.allclose(V @ np.diag(w) @ V.T, S, atol=1e-10)


def test_jacobi_extreme_scales():
    S = np.array([[1e200, 1.0], [1.0, -1e200]])
    w = matops.jacobi_eigh(S)
    assert w[0] == pytest.approx(-1e200) and w[1] == pytest.approx(1e200)
    assert np.array_equal(matops.jacobi_eigh(np.zeros((3, 3))), np.zeros(3))


def test_symmetry_and_pd():
    with pytest.raises(SymmetryError):
        matops.sym_eig_min(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert matops.is_positive_definite(np.diag([1.0, 2.0]))
    assert not matops.is_positive_definite(np.diag([1.0, 0.0]))
    assert not matops.is_positive_definite(np.diag([1.0, 1e-12]))


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1), st.floats(-2, 2))
def test_cholesky_agrees_with_eigen_sign(n, seed, shift):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    S = B @ B.T / n + shift * np.eye(n)
    lam = np.linalg.eigvalsh(S)[0]
    if abs(lam) > 1e-8:
        assert matops.cholesky_positive(S) == (lam > 0)


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_singular_values(n, m, seed):
    M = np.random.default_rng(seed).normal(size=(n, m))
    s = np.linalg.svd(M, compute_uv=False)
    assert matops.sigma_max(M) == pytest.approx(s[0], rel=1e-10)
    assert matops.sigma_min(M) == pytest.approx(s[-1], rel=1e-7, abs=1e-10)


@settings(max_examples=60)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_perron_root_oracles(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
    rho = matops.spectral_radius_nonneg(M)
    assert rho == pytest.approx(faddeev_leverrier_radius(M), rel=1e-6, abs=1e-8)
    if np.all(M > 0):
        assert rho == pytest.approx(power_radius(M), rel=1e-8)


def test_perron_reducible_and_nilpotent():
    assert matops.spectral_radius_nonneg(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(0.0, abs=1e-9)
    # permutation: power iteration cycles without the bisection fallback
    P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    assert matops.spectral_radius_nonneg(0.7 * P) == pytest.approx(0.7, rel=1e-9)
    with pytest.raises(ValueError):
        matops.spectral_radius_nonneg(np.array([[-1.0]]))
    with pytest.raises(DimensionError):
        matops.spectral_radius_nonneg(np.ones((2, 3)))


@settings(max_examples=60)
@given(st.integers(1, 5), st.integers(0, 2 ** 31 - 1), st.floats(0.3, 1.7))
def test_schur_stability(n, seed, target):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    M *= target / np.max(np.abs(np.linalg.eigvals(M)))
    if abs(target - 1) > 1e-3:
        assert matops.is_schur_stable(M) == (target < 1)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_solve(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    B = rng.normal(size=(n, 2))
    assert np.allclose(matops.solve(A, B), np.linalg.solve(A, B), atol=1e-10)


def test_solve_singular_reports_pivot():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError) as exc:
        matops.solve(A, np.ones(2))
    assert exc.value.pivot == 1


def test_block_diag():
    D = matops.block_diag(np.eye(2), 3 * np.ones((1, 2)))
    assert D.shape == (3, 4)
    assert np.array_equal(D[2], [0, 0, 3, 3])
