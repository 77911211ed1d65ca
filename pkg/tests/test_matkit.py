import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from imdob import matkit
from imdob.errors import NoConvergence, NotHurwitz, NotSymmetric, SpectraOverlap
from imdob.exosystem import zeroing_coeffs

from _common import example_blocks


def _residual(T, Phi, M, N, G):
    return np.linalg.norm(T @ Phi - M @ T - N @ G) / max(1.0, np.linalg.norm(N @ G))


def test_sylvester_scalar():
    T = matkit.solve_sylvester([[0.0]], [[-1.0]], [[1.0]], [[1.0]])
    assert_allclose(T, [[1.0]])


def test_sylvester_matches_kronecker_oracle():
    Phi = matkit.companion_bottom_row([-4.0, 0.0])
    M = matkit.companion_from_roots([-1.0, -2.0])
    N = np.array([[0.0], [1.0]])
    G = np.array([[1.0, 0.0]])
    T = matkit.solve_sylvester(Phi, M, N, G)
    # independent vectorization with row-major vec: vec(T Phi) = (I kron Phi^T) vec T
    op = np.kron(np.eye(2), Phi.T) - np.kron(M, np.eye(2))
    expected = np.linalg.solve(op, (N @ G).ravel()).reshape(2, 2)
    assert_allclose(T, expected, atol=1e-14)
    assert_allclose(T, scipy.linalg.solve_sylvester(-M, Phi, N @ G), atol=1e-14)


def test_sylvester_overlap_raises():
    with pytest.raises(SpectraOverlap):
        matkit.solve_sylvester([[0.0]], [[0.0]], [[1.0]], [[1.0]])


@st.composite
def sylvester_problems(draw):
    k = draw(st.integers(0, 3))
    freqs = draw(st.lists(st.floats(0.1, 5.0), min_size=k, max_size=k, unique=True))
    freqs = sorted(freqs)
    if any(b - a < 1e-2 for a, b in zip(freqs, freqs[1:])):
        freqs = freqs[:1]
    const = draw(st.booleans()) or not freqs
    beta = zeroing_coeffs(freqs, const)
    r = beta.size
    roots = draw(st.lists(st.floats(-5.0, -0.5), min_size=r, max_size=r))
    N = np.zeros((r, 1))
    N[-1] = 1.0
    G = np.zeros((1, r))
    G[0, 0] = 1.0
    return matkit.companion_bottom_row(beta), matkit.companion_from_roots(roots), N, G


@settings(max_examples=60, deadline=None)
@given(sylvester_problems())
def test_sylvester_residual_property(prob):
    Phi, M, N, G = prob
    T = matkit.solve_sylvester(Phi, M, N, G)
    assert _residual(T, Phi, M, N, G) <= 1e-10


def test_sylvester_example_nonsingular():
    b = example_blocks()
    for T in b.T_i:
        assert abs(np.linalg.det(T)) > 1e-12


def test_lyapunov_examples():
    assert_allclose(matkit.solve_lyapunov(-10.0 * np.eye(2)), 0.05 * np.eye(2), atol=1e-15)
    assert_allclose(matkit.solve_lyapunov(-np.eye(4)), 0.5 * np.eye(4), atol=1e-15)


def test_lyapunov_random_stable_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        K = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(3)
        Q = np.eye(3) + 0.1 * np.outer(*rng.normal(size=(2, 3))) 
        Q = Q @ Q.T
        P = matkit.solve_lyapunov(K, Q)
        assert_allclose(P, scipy.linalg.solve_continuous_lyapunov(K.T, -Q), rtol=1e-9, atol=1e-12)
        assert np.linalg.norm(K.T @ P + P @ K + Q) <= 1e-10 * np.linalg.norm(Q)
        assert_allclose(P, P.T, atol=1e-12)
        assert matkit.min_eig_sym(P) > 0


def test_lyapunov_not_hurwitz():
    with pytest.raises(NotHurwitz):
        matkit.solve_lyapunov(np.diag([-1.0, 0.0]))


def test_eigvals_examples():
    assert_allclose(matkit.eigvals(np.diag([1.0, 2.0, 3.0])), [1, 2, 3], atol=1e-14)
    assert_allclose(matkit.eigvals(matkit.companion_bottom_row([-4.0, 0.0])), [-2j, 2j], atol=1e-14)
    lam = matkit.eigvals(matkit.companion_bottom_row([0.0, -1.0, 0.0]))
    assert_allclose(lam, [-1j, 0, 1j], atol=1e-14)


def test_eigvals_match_lapack():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        for _ in range(25):
            A = rng.normal(size=(n, n))
            ours = matkit.eigvals(A)
            ref = np.linalg.eigvals(A)
            ref = ref[np.lexsort((ref.imag, ref.real))]
            assert_allclose(ours, ref, atol=1e-9 * max(1.0, np.abs(A).max()))
            scale = np.linalg.norm(A, 2) ** n
            for lam in ours:
                assert abs(np.linalg.det(A - lam * np.eye(n))) <= 1e-8 * max(scale, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_eigvals_conjugate_symmetry(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    lam = matkit.eigvals(A)
    conj = np.sort_complex(np.conj(lam))
    assert_allclose(np.sort_complex(lam), conj, atol=1e-9)


def test_eigvals_budget_exhausted(monkeypatch):
    monkeypatch.setattr(matkit, "QR_MAX_ITER", 0)
    with pytest.raises(NoConvergence):
        matkit.eigvals(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 2.0, 3.0]]))


def test_companion_layout_and_polynomial():
    assert_array_equal(matkit.companion_bottom_row([0.0]), [[0.0]])
    assert_array_equal(matkit.companion_bottom_row([-4.0, 0.0]), [[0.0, 1.0], [-4.0, 0.0]])
    rng = np.random.default_rng(1)
    for r in range(1, 7):
        beta = rng.normal(size=r)
        A = matkit.companion_bottom_row(beta)
        # l^r - beta_r l^(r-1) - ... - beta_1, descending coefficients
        expected = np.concatenate(([1.0], -beta[::-1]))
        assert_allclose(np.poly(matkit.eigvals(A)).real, expected, atol=1e-8)


def test_companion_from_roots_example():
    assert_allclose(matkit.companion_from_roots([-1, -2, -3])[-1], [-6, -11, -6])
    assert_allclose(matkit.companion_from_roots([-1, -1]), [[0, 1], [-1, -2]])


def test_min_eig_sym():
    assert matkit.min_eig_sym(np.eye(3)) == pytest.approx(1.0)
    assert matkit.min_eig_sym(np.diag([5.0, 0.1])) == pytest.approx(0.1)
    rng = np.random.default_rng(2)
    A = rng.normal(size=(4, 4))
    S = A @ A.T + 0.1 * np.eye(4)
    assert matkit.min_eig_sym(S) == pytest.approx(matkit.eigvals(S).real.min(), abs=1e-8 * np.linalg.norm(S))
    with pytest.raises(NotSymmetric):
        matkit.min_eig_sym([[1.0, 2.0], [0.0, 1.0]])


def test_expm_matches_scipy():
    rng = np.random.default_rng(4)
    for n in (1, 2, 3, 5):
        A = rng.normal(size=(n, n)) * 3
        assert_allclose(matkit.expm(A), scipy.linalg.expm(A), rtol=1e-10, atol=1e-12)
    M = example_blocks().M
    for t in (0.0, 0.5, 7.0, 40.0):
        assert_allclose(matkit.expm(M * t), scipy.linalg.expm(M * t), rtol=1e-9, atol=1e-14)
