"""Canonical nonlinear internal model.

    eta' = M eta + N f2(t, x, u) - M N x2,      rho_hat = eta - N x2

The error ``eta - rho - N x2`` obeys ``e' = M e`` whatever the plant and
input, so ``rho_hat`` converges to ``rho = -T v`` at the rate set by ``M``.
"""
import numpy as np
from numba import njit

from .errors import DimensionMismatch


def _check(blocks, eta, x2, f2=None):
    M, N = np.asarray(blocks.M, dtype=float), np.asarray(blocks.N, dtype=float)
    eta = np.asarray(eta, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if eta.shape != (M.shape[0],):
        raise DimensionMismatch(f"eta has shape {eta.shape}, expected ({M.shape[0]},)")
    if x2.shape != (N.shape[1],):
        raise DimensionMismatch(f"x2 has shape {x2.shape}, expected ({N.shape[1]},)")
    if f2 is not None:
        f2 = np.asarray(f2, dtype=float)
        if f2.shape != x2.shape:
            raise DimensionMismatch(f"f2 has shape {f2.shape}, expected {x2.shape}")
    return M, N, eta, x2, f2


def im_rhs(blocks, eta, x2, f2_val):
    """Right-hand side ``M eta + N f2 - M N x2``.

    Parameters
    ----------
    blocks : ExoBlocks or any object with aggregates ``M`` and ``N``
    eta : ndarray, shape (r_bar,)
    x2, f2_val : ndarray, shape (n2,)
    """
    M, N, eta, x2, f2 = _check(blocks, eta, x2, f2_val)
    return M @ eta + N @ f2 - M @ (N @ x2)


def rho_hat(blocks, eta, x2):
    """Estimate ``eta - N x2`` of the exosystem coordinates."""
    _, N, eta, x2, _ = _check(blocks, eta, x2)
    return eta - N @ x2


def d0_hat(rho_hat, Psi):
    """Known-frequency disturbance estimate ``-Psi rho_hat``; accepts stacked rows."""
    return -np.asarray(rho_hat, dtype=float) @ np.asarray(Psi, dtype=float).T


@njit(cache=True)
def _im_kernel(M, N, eta, x2, f2, out):
    """``out = M (eta - N x2) + N f2`` with N block-diagonal of unit columns."""
    r, n2 = N.shape
    rho = eta.copy()
    for i in range(r):
        for j in range(n2):
            rho[i] -= N[i, j] * x2[j]
    for i in range(r):
        acc = 0.0
        for k in range(r):
            acc += M[i, k] * rho[k]
        for j in range(n2):
            acc += N[i, j] * f2[j]
        out[i] = acc
    return rho
