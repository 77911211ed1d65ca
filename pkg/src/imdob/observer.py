"""Adaptive disturbance observer.

    x2_hat' = f2 - Mreg(rho_hat) theta + K (x2_hat - x2)
    theta'  = Lambda Mreg(rho_hat)^T P (x2_hat - x2)
    d_hat   = -Mreg(rho_hat) theta

with ``Mreg(rho) = blkdiag(rho_1^T, ..., rho_n^T)`` the regressor built from
the per-channel partition of ``rho``.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import matkit
from .errors import DimensionMismatch


@dataclass
class ObserverGains:
    K: np.ndarray
    P: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.Lambda = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        n = self.K.shape[0]
        if self.K.shape != (n, n) or self.P.shape != (n, n):
            raise DimensionMismatch("K and P must be square and of equal size")
        resid = self.K.T @ self.P + self.P @ self.K + np.eye(n)
        if np.linalg.norm(resid) > 1e-10 * max(1.0, np.linalg.norm(self.P)):
            raise ValueError("P does not satisfy K^T P + P K = -I")
        L = self.Lambda
        if L.shape[0] != L.shape[1] or not np.allclose(L, L.T):
            raise ValueError("Lambda must be square and symmetric")
        if np.linalg.eigvalsh(L)[0] <= 0:
            raise ValueError("Lambda must be positive definite")

    @classmethod
    def from_K(cls, K, Lambda, P=None):
        """Build gains with ``P`` solving ``K^T P + P K = -I``; a supplied ``P`` is checked."""
        K = np.atleast_2d(np.asarray(K, dtype=float))
        P_solved = matkit.solve_lyapunov(K)
        if P is not None:
            P = np.atleast_2d(np.asarray(P, dtype=float))
            if not np.allclose(P, P_solved, rtol=1e-9, atol=1e-12):
                raise ValueError("supplied P is inconsistent with K")
        return cls(K, P_solved, Lambda)


@dataclass
class ObserverState:
    x2_hat: np.ndarray
    theta: np.ndarray


def _offsets(orders):
    return np.concatenate(([0], np.cumsum(orders))).astype(np.int64)


def _check_rho(rho, orders):
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != int(sum(orders)):
        raise DimensionMismatch(f"vector of length {rho.shape[-1]} does not match orders {tuple(orders)}")
    return rho


def regressor(rho_hat, orders):
    """Regressor matrix ``blkdiag(rho_1^T, ..., rho_n^T)``, shape (n2, r_bar)."""
    rho = _check_rho(rho_hat, orders)
    if rho.ndim != 1:
        raise DimensionMismatch("regressor expects a single vector")
    offs = _offsets(orders)
    R = np.zeros((len(orders), offs[-1]))
    for i in range(len(orders)):
        R[i, offs[i]:offs[i + 1]] = rho[offs[i]:offs[i + 1]]
    return R


def regressor_apply(rho, theta, orders):
    """``Mreg(rho) theta`` computed blockwise; leading axes broadcast."""
    rho = _check_rho(rho, orders)
    theta = _check_rho(theta, orders)
    offs = _offsets(orders)
    prod = rho * theta
    return np.stack([prod[..., offs[i]:offs[i + 1]].sum(axis=-1) for i in range(len(orders))],
                    axis=-1)


def d_hat(rho_hat, theta, orders):
    """Adaptive disturbance estimate ``-Mreg(rho_hat) theta``."""
    return -regressor_apply(rho_hat, theta, orders)


def obs_rhs(state, rho_hat, x2, f2_val, gains, orders):
    """Right-hand sides ``(x2_hat', theta')`` of the observer."""
    rho = _check_rho(rho_hat, orders)
    theta = _check_rho(state.theta, orders)
    x2_hat = np.asarray(state.x2_hat, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    f2 = np.asarray(f2_val, dtype=float)
    n2 = len(orders)
    if x2_hat.shape != (n2,) or x2.shape != (n2,) or f2.shape != (n2,):
        raise DimensionMismatch(f"observer vectors must have length {n2}")
    R = regressor(rho, orders)
    err = x2_hat - x2
    return f2 - R @ theta + gains.K @ err, gains.Lambda @ (R.T @ (gains.P @ err))


@njit(cache=True)
def _obs_kernel(rho, theta, x2_hat, x2, f2, K, P, Lam, offs, dx, dtheta):
    """Fill ``dx``, ``dtheta``; returns the adaptive estimate ``d_hat``."""
    n2 = x2.size
    r = rho.size
    dh = np.zeros(n2)
    for i in range(n2):
        for k in range(offs[i], offs[i + 1]):
            dh[i] -= rho[k] * theta[k]
    err = x2_hat - x2
    perr = np.zeros(n2)
    for i in range(n2):
        acc = f2[i] + dh[i]
        for j in range(n2):
            acc += K[i, j] * err[j]
            perr[i] += P[i, j] * err[j]
        dx[i] = acc
    g = np.zeros(r)
    for i in range(n2):
        for k in range(offs[i], offs[i + 1]):
            g[k] = rho[k] * perr[i]
    for k in range(r):
        acc = 0.0
        for m in range(r):
            acc += Lam[k, m] * g[m]
        dtheta[k] = acc
    return dh
