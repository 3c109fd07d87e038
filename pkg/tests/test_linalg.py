import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pebk.linalg import (
    DimensionError, SingularOperatorError, SparseOperator, dense_expm, factor_shifted, matvec,
    phi_functions, phi_scalar, thin_qr, thin_svd, _round_robin,
)


def periodic_tridiag(n, lo, d, up):
    M = sp.diags([lo, d, up, up, lo], [-1, 0, 1, -(n - 1), n - 1], shape=(n, n))
    return SparseOperator(M.tocsr(), "tridiagonal_periodic")


def random_operator(rng, n, density=0.2):
    M = sp.random(n, n, density=density, random_state=rng, format="csr")
    return SparseOperator(M - 2 * sp.identity(n), "general")


# -- SparseOperator --------------------------------------------------------

def test_from_csr_roundtrip():
    A = SparseOperator.from_csr(3, [0, 1, 3, 4], [0, 0, 2, 1], [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(A.toarray(), [[1, 0, 0], [2, 0, 3], [0, 4, 0]])
    np.testing.assert_array_equal(A.row_offsets, [0, 1, 3, 4])


@pytest.mark.parametrize("offsets, cols", [([0, 1, 2], [0, 1]), ([0, 2, 1, 2], [0, 1])])
def test_from_csr_rejects_bad_offsets(offsets, cols):
    with pytest.raises(ValueError):
        SparseOperator.from_csr(3, offsets, cols, np.ones(len(cols)))


def test_from_csr_rejects_out_of_range_column():
    with pytest.raises(ValueError):
        SparseOperator.from_csr(2, [0, 1, 2], [0, 5], [1.0, 1.0])


def test_non_square_and_nonfinite_rejected():
    with pytest.raises(DimensionError):
        SparseOperator(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix(np.array([[np.nan, 0], [0, 1.0]])))


def test_structure_hint_is_checked():
    M = sp.csr_matrix(np.ones((5, 5)))
    with pytest.raises(ValueError):
        SparseOperator(M, "tridiagonal_periodic")
    with pytest.raises(ValueError):
        SparseOperator(M, "banded")


def test_matvec_matches_dense():
    rng = np.random.default_rng(0)
    A = random_operator(rng, 30)
    x = rng.standard_normal(30)
    np.testing.assert_allclose(matvec(A, x), A.toarray() @ x, rtol=1e-14, atol=1e-14)
    with pytest.raises(DimensionError):
        matvec(A, np.ones(29))


def test_sum_keeps_hint_only_when_both_tridiagonal():
    T = periodic_tridiag(6, 1.0, -2.0, 1.0)
    assert (T + T).structure_hint == "tridiagonal_periodic"
    assert (T + SparseOperator.identity(6)).structure_hint == "general"
    np.testing.assert_allclose(T.scaled(3.0).toarray(), 3 * T.toarray())


# -- shifted solves ----------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(3, 40),
    lo=st.floats(-50, 50), d=st.floats(-200, 0), up=st.floats(-50, 50),
    gamma=st.floats(1e-3, 1.0),
    seed=st.integers(0, 2**16),
)
def test_cyclic_solve_matches_dense(n, lo, d, up, gamma, seed):
    A = periodic_tridiag(n, lo, d, up)
    M = np.eye(n) - gamma * A.toarray()
    if np.linalg.cond(M) > 1e10:
        return
    b = np.random.default_rng(seed).standard_normal((n, 2))
    x = factor_shifted(A, gamma).solve(b)
    np.testing.assert_allclose(M @ x, b, atol=1e-9 * max(1.0, np.abs(b).max()) * np.linalg.cond(M))


def test_cyclic_solve_with_zero_leading_diagonal():
    # gamma*A has diagonal exactly 1, so I - gamma*A has a zero diagonal and needs pivoting
    n = 8
    A = periodic_tridiag(n, 0.3, 1.0, -0.7)
    fac = factor_shifted(A, 1.0)
    M = np.eye(n) - A.toarray()
    b = np.arange(1.0, n + 1)
    np.testing.assert_allclose(M @ fac.solve(b), b, atol=1e-12)


def test_general_solve_and_apply():
    rng = np.random.default_rng(3)
    A = random_operator(rng, 25)
    fac = factor_shifted(A, 0.3)
    b = rng.standard_normal(25)
    x = fac.solve(b)
    np.testing.assert_allclose(fac.apply(x), b, atol=1e-12)
    with pytest.raises(DimensionError):
        fac.solve(np.ones(3))


def test_singular_shift_reports_pivot():
    # I - 1*I is the zero matrix
    with pytest.raises(SingularOperatorError) as err:
        factor_shifted(SparseOperator.identity(4), 1.0)
    assert err.value.pivot >= 0
    with pytest.raises(SingularOperatorError):
        factor_shifted(periodic_tridiag(5, 0.0, 1.0, 0.0), 1.0)


def test_nonpositive_shift_rejected():
    with pytest.raises(ValueError):
        factor_shifted(SparseOperator.identity(3), 0.0)


# -- QR and SVD --------------------------------------------------------------

def test_thin_qr_properties():
    M = np.random.default_rng(1).standard_normal((20, 6))
    Q, R = thin_qr(M)
    np.testing.assert_allclose(Q.T @ Q, np.eye(6), atol=1e-14)
    np.testing.assert_allclose(Q @ R, M, atol=1e-13)
    assert np.all(np.diag(R) >= 0)
    assert np.allclose(R, np.triu(R))
    with pytest.raises(DimensionError):
        thin_qr(np.ones((2, 3)))


def test_round_robin_covers_every_pair_once():
    for s in (2, 5, 8):
        seen = [tuple(pq) for p, q in _round_robin(s) for pq in zip(p, q)]
        assert sorted(seen) == [(i, j) for i in range(s) for j in range(i + 1, s)]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 30), s=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_thin_svd_against_eigen_oracle(n, s, seed):
    s = min(s, n)
    M = np.random.default_rng(seed).standard_normal((n, s))
    svd = thin_svd(M)
    # oracle: singular values are square roots of the eigenvalues of M^T M
    ev = np.sort(np.linalg.eigvalsh(M.T @ M))[::-1]
    np.testing.assert_allclose(svd.singular_values, np.sqrt(np.maximum(ev, 0)), atol=1e-10 * max(1, ev[0]) ** 0.5)
    assert np.all(np.diff(svd.singular_values) <= 1e-12)
    np.testing.assert_allclose(svd.U.T @ svd.U, np.eye(s), atol=1e-10)
    np.testing.assert_allclose(svd.V.T @ svd.V, np.eye(s), atol=1e-12)
    np.testing.assert_allclose((svd.U * svd.singular_values) @ svd.V.T, M, atol=1e-10)


def test_thin_svd_rank_deficient():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((15, 2)) @ rng.standard_normal((2, 6))
    svd = thin_svd(M)
    assert svd.singular_values[2] < 1e-12 * svd.singular_values[0]
    np.testing.assert_allclose(svd.U.T @ svd.U, np.eye(6), atol=1e-12)
    np.testing.assert_allclose((svd.U * svd.singular_values) @ svd.V.T, M, atol=1e-12)


def test_thin_svd_of_wide_matrix():
    M = np.random.default_rng(6).standard_normal((3, 8))
    svd = thin_svd(M)
    assert svd.U.shape == (3, 3) and svd.V.shape == (8, 3)
    np.testing.assert_allclose((svd.U * svd.singular_values) @ svd.V.T, M, atol=1e-13)


def test_thin_svd_of_diagonal():
    svd = thin_svd(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(svd.singular_values, [3.0, 2.0, 1.0])


# -- exponentials --------------------------------------------------------------

def test_dense_expm_symmetric_against_eigen():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((6, 6))
    H = -(B @ B.T)
    lam, X = np.linalg.eigh(H)
    np.testing.assert_allclose(dense_expm(H), (X * np.exp(lam)) @ X.T, atol=1e-12)
    assert dense_expm(np.zeros((0, 0))).shape == (0, 0)


def taylor_phi(H, k, terms=60):
    out = np.zeros_like(H)
    P = np.eye(H.shape[0])
    for i in range(terms):
        out = out + P / math.factorial(i + k)
        P = P @ H
    return out


def test_phi_functions_against_taylor():
    H = np.random.default_rng(4).standard_normal((5, 5)) * 0.8
    phis = phi_functions(H, 4)
    for k, Pk in enumerate(phis):
        np.testing.assert_allclose(Pk, taylor_phi(H, k), rtol=1e-12, atol=1e-13)


def test_phi_functions_order_checked():
    with pytest.raises(ValueError):
        phi_functions(np.eye(2), 0)
    with pytest.raises(ValueError):
        phi_functions(np.eye(2), 5)


@settings(max_examples=50, deadline=None)
@given(re=st.floats(-60, 5), im=st.floats(-20, 20))
def test_phi_scalar_recurrence(re, im):
    z = complex(re, im)
    if abs(z) < 1e-3:
        return
    prev = np.exp(z)
    for k in range(1, 5):
        expected = (prev - 1 / math.factorial(k - 1)) / z
        got = phi_scalar(np.array([z]), k)[0]
        assert abs(got - expected) <= 1e-10 * max(1.0, abs(expected)) + 1e-12 / abs(z) ** k
        prev = expected


def test_phi_scalar_at_zero():
    for k in range(1, 5):
        assert phi_scalar(np.array([0.0]), k)[0] == pytest.approx(1 / math.factorial(k))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), a=st.floats(0, 1), b=st.floats(0, 1))
def test_expm_semigroup(seed, a, b):
    H = np.random.default_rng(seed).standard_normal((6, 6))
    np.testing.assert_allclose(dense_expm(H * (a + b)), dense_expm(H * a) @ dense_expm(H * b),
                               rtol=1e-12, atol=1e-12 * np.linalg.norm(dense_expm(H * (a + b))))


def test_phi_matrix_recurrence():
    H = np.random.default_rng(7).standard_normal((6, 6))
    phis = phi_functions(H, 4)
    for j in range(4):
        np.testing.assert_allclose(H @ phis[j + 1] + np.eye(6) / math.factorial(j), phis[j], atol=1e-12)


@pytest.mark.parametrize("hint", ["tridiagonal_periodic", "general"])
def test_solve_residual_on_model_operators(hint):
    from pebk.model import AdeParams, GridSpec, build_ade

    A = build_ade(GridSpec(400), AdeParams(1.0, 1e-3))
    if hint == "general":
        A = SparseOperator(A.matrix, "general")
    b = np.random.default_rng(0).standard_normal((400, 3))
    for gamma in (1e-3, 0.1, 10.0):
        x = factor_shifted(A, gamma).solve(b)
        r = b - (x - gamma * (A.matrix @ x))
        assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(b)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(16, 200), s=st.integers(1, 16), seed=st.integers(0, 2**16))
def test_qr_and_svd_residuals_up_to_200_by_16(n, s, seed):
    M = np.random.default_rng(seed).standard_normal((n, s))
    Q, R = thin_qr(M)
    scale = np.linalg.norm(M)
    assert np.linalg.norm(Q @ R - M) <= 1e-10 * scale
    assert np.linalg.norm(Q.T @ Q - np.eye(s)) <= 1e-10
    svd = thin_svd(M)
    assert np.linalg.norm((svd.U * svd.singular_values) @ svd.V.T - M) <= 1e-10 * scale
    assert np.linalg.norm(svd.U.T @ svd.U - np.eye(s)) <= 1e-10
