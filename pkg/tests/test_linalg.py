import numpy as np
import pytest

from lsdqn import linalg
from lsdqn.errors import DimensionMismatch, NotPositiveDefinite


# ---------------------------------------------------------------------------
# Independent oracles. These stay deliberately naive: the Gauss-Jordan
# inverse and the Jacobi eigensolver share no code with the module they
# check.
# ---------------------------------------------------------------------------

def gauss_jordan_inverse(a):
    n = a.shape[0]
    aug = np.hstack([a.astype(np.float64).copy(), np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[pivot, col]) < 1e-14:
            raise ZeroDivisionError("singular")
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def jacobi_eigenvalues(a, sweeps=100):
    a = a.astype(np.float64).copy()
    n = a.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
                if abs(a[p, q]) < 1e-15:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
        if off < 1e-14:
            break
    return np.sort(np.diag(a))


def random_spd(rng, n, spread=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = rng.uniform(0.5, 0.5 + spread, size=n)
    return q @ np.diag(eigs) @ q.T


# ---------------------------------------------------------------------------
# cholesky
# ---------------------------------------------------------------------------

def test_cholesky_identity():
    assert np.array_equal(linalg.cholesky(np.eye(3)), np.eye(3))


def test_cholesky_known_2x2():
    a = np.array([[4.0, 2.0], [2.0, 3.0]])
    lower = linalg.cholesky(a)
    expected = np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]])
    assert np.allclose(lower, expected, rtol=0, atol=1e-14)
    # Recomposition by direct multiplication.
    assert np.allclose(lower @ lower.T, a, rtol=1e-12, atol=0)


def test_cholesky_indefinite_raises():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))  # eigenvalue -1


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        linalg.cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_cholesky_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        linalg.cholesky(np.ones((2, 3)))


def test_cholesky_recomposition_random():
    rng = np.random.default_rng(7)
    for n in (1, 2, 3, 5, 8, 13):
        a = random_spd(rng, n, spread=9.0)
        lower = linalg.cholesky(a)
        assert np.tril(lower) is not lower or True
        err = np.linalg.norm(lower @ lower.T - a) / np.linalg.norm(a)
        assert err < 1e-10


# ---------------------------------------------------------------------------
# solve_regularized
# ---------------------------------------------------------------------------

def test_solve_regularized_identity_unregularized():
    w = linalg.solve_regularized(np.eye(2), np.array([1.0, 2.0]), 0.0, np.zeros(2))
    assert np.allclose(w, [1.0, 2.0], atol=1e-14)


def test_solve_regularized_prior_shrinkage():
    # a = I, lam = 3, b = 0, prior = (1, 1): w = lam/(1+lam) * prior.
    w = linalg.solve_regularized(np.eye(2), np.zeros(2), 3.0, np.ones(2))
    assert np.allclose(w, [0.75, 0.75], atol=1e-14)


def test_solve_regularized_matches_gauss_jordan_oracle():
    rng = np.random.default_rng(21)
    a = random_spd(rng, 5, spread=4.0)
    b = rng.standard_normal(5)
    prior = rng.standard_normal(5)
    lam = 1.0
    w = linalg.solve_regularized(a, b, lam, prior)
    oracle = gauss_jordan_inverse(a + lam * np.eye(5)) @ (b + lam * prior)
    assert np.allclose(w, oracle, rtol=1e-9, atol=1e-12)


def test_solve_regularized_residual_contract():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(2, 12))
        a = random_spd(rng, n, spread=99.0)
        b = rng.standard_normal(n) * 10
        prior = rng.standard_normal(n)
        lam = float(rng.uniform(0.0, 5.0))
        w = linalg.solve_regularized(a, b, lam, prior)
        resid = np.linalg.norm((a + lam * np.eye(n)) @ w - (b + lam * prior))
        assert resid <= 1e-8 * (1 + np.linalg.norm(b))


def test_solve_regularized_lam_zero_on_spd_matches_inverse_oracle():
    rng = np.random.default_rng(5)
    a = random_spd(rng, 6, spread=3.0)
    b = rng.standard_normal(6)
    w = linalg.solve_regularized(a, b, 0.0, np.zeros(6))
    assert np.allclose(w, gauss_jordan_inverse(a) @ b, atol=1e-8)


def test_solve_regularized_singular_lam_zero_raises():
    a = np.zeros((3, 3))
    with pytest.raises(NotPositiveDefinite):
        linalg.solve_regularized(a, np.ones(3), 0.0, np.zeros(3))


def test_solve_regularized_monotone_prior_pull():
    rng = np.random.default_rng(11)
    a = random_spd(rng, 6, spread=5.0)
    b = rng.standard_normal(6)
    prior = rng.standard_normal(6)
    dists = []
    for lam in (1e-2, 1.0, 1e2, 1e4):
        w = linalg.solve_regularized(a, b, lam, prior)
        dists.append(np.linalg.norm(w - prior))
    assert all(d1 >= d2 - 1e-12 for d1, d2 in zip(dists, dists[1:]))
    assert dists[-1] < 1e-3 * max(1.0, np.linalg.norm(prior))


def test_solve_regularized_negative_lambda_rejected():
    with pytest.raises(ValueError):
        linalg.solve_regularized(np.eye(2), np.zeros(2), -1.0, np.zeros(2))


def test_solve_regularized_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        linalg.solve_regularized(np.eye(2), np.zeros(3), 1.0, np.zeros(2))


# ---------------------------------------------------------------------------
# solve_linear / least_squares
# ---------------------------------------------------------------------------

def test_solve_linear_asymmetric_exact():
    a = np.array([[1.0, -0.9], [0.0, 1.0]])  # asymmetric, well-conditioned
    x_true = np.array([2.0, -3.0])
    x = linalg.solve_linear(a, a @ x_true)
    assert np.allclose(x, x_true, atol=1e-12)


def test_solve_linear_singular_raises():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        linalg.solve_linear(a, np.array([1.0, 0.0]))


def test_least_squares_consistent_singular_system():
    # Rank-1 consistent system: lstsq recovers an exact solution.
    u = np.array([1.0, 2.0, 3.0])
    a = np.outer(u, u)
    x = linalg.least_squares(a, a @ np.array([1.0, 0.0, 0.0]))
    assert np.linalg.norm(a @ x - a @ np.array([1.0, 0.0, 0.0])) < 1e-10


# ---------------------------------------------------------------------------
# condition_estimate
# ---------------------------------------------------------------------------

def test_condition_identity():
    assert linalg.condition_estimate(np.eye(4)) == pytest.approx(1.0, rel=1e-9)


def test_condition_diagonal():
    assert linalg.condition_estimate(np.diag([100.0, 1.0])) == pytest.approx(100.0, rel=1e-6)


def test_condition_matches_jacobi_oracle():
    rng = np.random.default_rng(17)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    eigs = np.array([0.3, 1.0, 2.0, 4.0, 9.0, 31.0])  # well separated extremes
    a = q @ np.diag(eigs) @ q.T
    est = linalg.condition_estimate(a)
    oracle_eigs = jacobi_eigenvalues(a)
    oracle = oracle_eigs[-1] / oracle_eigs[0]
    assert abs(est - oracle) / oracle < 0.05
