"""Small dense linear algebra used by the observer and identifier.

All matrices here are tiny (at most 8x8 in every scenario), so the solvers
favour directness over asymptotic cost: Sylvester and Lyapunov equations are
solved through their Kronecker-vectorized form, and eigenvalues come from a
balanced Hessenberg reduction followed by Francis double-shift QR sweeps.
"""
import math

import numpy as np
from numba import njit

from .errors import DimensionMismatch, NoConvergence, NotHurwitz, NotSymmetric, SpectraOverlap

# Iteration budget per eigenvalue for the QR sweeps; exceptional shifts are
# applied at iterations 10 and 20.
QR_MAX_ITER = 30

_SYLVESTER_RCOND = 1e-13


def _as_matrix(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _vec_solve(op, rhs, error_cls, what):
    # Reciprocal condition estimate guards against a numerically singular operator.
    s = np.linalg.svd(op, compute_uv=False)
    if s[-1] <= _SYLVESTER_RCOND * max(s[0], 1.0):
        raise error_cls(f"{what}: vectorized operator is singular (sigma_min={s[-1]:.3e})")
    return np.linalg.solve(op, rhs)


def solve_sylvester(Phi, M, N, Gamma):
    """Solve ``T Phi - M T = N Gamma`` for ``T``.

    Parameters
    ----------
    Phi : (r, r) array_like
        Exosystem matrix.
    M : (r, r) array_like
        Hurwitz design matrix; must share no eigenvalue with ``Phi``.
    N : (r, 1) array_like
    Gamma : (1, r) array_like

    Returns
    -------
    T : (r, r) ndarray

    Raises
    ------
    SpectraOverlap
        If the vectorized system ``(Phi^T kron I - I kron M) vec(T) = vec(N Gamma)``
        is singular to working precision.
    """
    Phi = _as_matrix(Phi, "Phi")
    M = _as_matrix(M, "M")
    r = Phi.shape[0]
    N = np.asarray(N, dtype=float).reshape(r, -1)
    Gamma = np.asarray(Gamma, dtype=float).reshape(-1, r)
    if Phi.shape != (r, r) or M.shape != (r, r) or N.shape[1] != Gamma.shape[0]:
        raise DimensionMismatch(
            f"incompatible shapes Phi{Phi.shape} M{M.shape} N{N.shape} Gamma{Gamma.shape}")
    eye = np.eye(r)
    # column-major vec: vec(T Phi) = (Phi^T kron I) vec T, vec(M T) = (I kron M) vec T
    op = np.kron(Phi.T, eye) - np.kron(eye, M)
    rhs = (N @ Gamma).reshape(-1, order="F")
    return _vec_solve(op, rhs, SpectraOverlap, "Sylvester").reshape(r, r, order="F")


def solve_lyapunov(K, Q=None):
    """Return the symmetric ``P`` with ``K^T P + P K = -Q`` (``Q`` defaults to identity)."""
    K = _as_matrix(K, "K")
    n = K.shape[0]
    if K.shape != (n, n):
        raise DimensionMismatch(f"K must be square, got {K.shape}")
    Q = np.eye(n) if Q is None else _as_matrix(Q, "Q")
    if Q.shape != (n, n):
        raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
    if not is_hurwitz(K):
        raise NotHurwitz("K has an eigenvalue with nonnegative real part")
    eye = np.eye(n)
    op = np.kron(eye, K.T) + np.kron(K.T, eye)
    P = _vec_solve(op, -Q.reshape(-1, order="F"), NotHurwitz, "Lyapunov").reshape(n, n, order="F")
    return 0.5 * (P + P.T)


def companion_bottom_row(beta):
    """Companion matrix with ones on the superdiagonal and ``beta`` as its last row.

    Its characteristic polynomial is ``l^r - beta[r-1] l^(r-1) - ... - beta[0]``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    r = beta.size
    if r < 1:
        raise DimensionMismatch("companion matrix needs at least one coefficient")
    A = np.zeros((r, r))
    A[np.arange(r - 1), np.arange(1, r)] = 1.0
    A[-1, :] = beta
    return A


def companion_from_roots(roots):
    """Bottom-row companion matrix whose eigenvalues are ``roots``.

    Complex roots must come in conjugate pairs so the matrix is real.
    """
    coeffs = np.poly(np.asarray(roots))  # descending, leading 1
    if np.iscomplexobj(coeffs):
        if np.max(np.abs(coeffs.imag)) > 1e-12 * max(1.0, np.max(np.abs(coeffs))):
            raise ValueError("roots must be closed under conjugation")
        coeffs = coeffs.real
    # l^r + c_{r-1} l^{r-1} + ... + c_0  ->  beta_j = -c_{j-1}
    return companion_bottom_row(-coeffs[:0:-1])


def is_hurwitz(A):
    return bool(np.all(eigvals(A).real < 0.0))


def min_eig_sym(S, rtol=1e-9):
    """Smallest eigenvalue of a symmetric matrix."""
    S = _as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"S must be square, got {S.shape}")
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
    if np.max(np.abs(S - S.T)) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])


# ---------------------------------------------------------------------------
# eigenvalues


@njit(cache=True)
def _balance(a):
    # Parlett-Reinsch balancing with radix-2 scale factors (exact in floating point).
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(n):
                        a[i, j] *= g
                    for j in range(n):
                        a[j, i] *= f


@njit(cache=True)
def _hessenberg(a):
    # Householder reduction to upper Hessenberg form, in place.
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        alpha = np.sqrt(np.sum(x * x))
        if alpha == 0.0:
            continue
        if x[0] > 0.0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm2 = np.sum(v * v)
        if vnorm2 == 0.0:
            continue
        # H = I - 2 v v^T / (v^T v); A <- H A H
        for j in range(n):
            s = 0.0
            for i in range(v.size):
                s += v[i] * a[k + 1 + i, j]
            s *= 2.0 / vnorm2
            for i in range(v.size):
                a[k + 1 + i, j] -= s * v[i]
        for i in range(n):
            s = 0.0
            for j in range(v.size):
                s += a[i, k + 1 + j] * v[j]
            s *= 2.0 / vnorm2
            for j in range(v.size):
                a[i, k + 1 + j] -= s * v[j]
        for i in range(k + 2, n):
            a[i, k] = 0.0


@njit(cache=True)
def _sign(a, b):
    return abs(a) if b >= 0.0 else -abs(a)


@njit(cache=True)
def _hqr(h, max_iter):
    """Francis double-shift QR on an upper Hessenberg matrix.

    Works on a 1-based padded copy. Returns (wr, wi, ok).
    """
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = h
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    p = q = r = s = w = x = y = z = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + _sign(z, p)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == max_iter:
                        return wr[1:], wi[1:], False
                    if its == 10 or its == 20:
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k != nn - 1:
                                r = a[k + 2, k - 1]
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = _sign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            for j in range(k, nn + 1):
                                p = a[k, j] + q * a[k + 1, j]
                                if k != nn - 1:
                                    p += r * a[k + 2, j]
                                    a[k + 2, j] -= p * z
                                a[k + 1, j] -= p * y
                                a[k, j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                p = x * a[i, k] + y * a[i, k + 1]
                                if k != nn - 1:
                                    p += z * a[i, k + 2]
                                    a[i, k + 2] -= p * r
                                a[i, k + 1] -= p * q
                                a[i, k] -= p
            if l >= nn - 1:
                break
    return wr[1:], wi[1:], True


def eigvals(A):
    """Eigenvalues of a small real square matrix.

    Returns a complex array sorted by (real, imag). Complex eigenvalues of a
    real input appear as exact conjugate pairs.

    Raises
    ------
    NoConvergence
        If some eigenvalue needs more than ``QR_MAX_ITER`` QR sweeps.
    """
    a = _as_matrix(A, "A").copy()
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {a.shape}")
    if n == 1:
        return np.array([complex(a[0, 0])])
    _balance(a)
    _hessenberg(a)
    wr, wi, ok = _hqr(a, QR_MAX_ITER)
    if not ok:
        raise NoConvergence(f"QR iteration exceeded {QR_MAX_ITER} sweeps for one eigenvalue")
    lam = wr + 1j * wi
    return lam[np.lexsort((lam.imag, lam.real))]


# ---------------------------------------------------------------------------
# matrix exponential

_PADE6 = [1.0]
for _k in range(1, 7):
    _PADE6.append(_PADE6[-1] * (6 - _k + 1) / (_k * (12 - _k + 1)))


def expm(A):
    """Matrix exponential by scaling and squaring with a [6/6] Pade approximant."""
    A = _as_matrix(A, "A")
    n = A.shape[0]
    norm = np.max(np.sum(np.abs(A), axis=1)) if n else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = A / (2.0 ** s)
    num = np.zeros_like(X)
    den = np.zeros_like(X)
    Xk = np.eye(n)
    for k, c in enumerate(_PADE6):
        if k:
            Xk = Xk @ X
        num += c * Xk
        den += (-1) ** k * c * Xk
    E = np.linalg.solve(den, num)
    for _ in range(s):
        E = E @ E
    return E
