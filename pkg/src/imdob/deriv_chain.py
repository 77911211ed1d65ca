"""Recursive estimates of disturbance derivatives.

    eps_1 = M rho_hat - N d_hat
    eps_{k+1} = M eps_k - N delta_k,     delta_k = -Mreg(eps_k) theta

``eps_k`` estimates the k-th derivative of ``rho`` and ``delta_k`` the k-th
derivative of ``d``. The chain is algebraic, so it is evaluated sample by
sample from the current observer outputs.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .observer import regressor_apply


@dataclass
class DerivEstimates:
    eps: list
    delta: list

    @property
    def q(self):
        return len(self.delta)

    def chi_hat(self, d_hat):
        """``col(d_hat, delta_1, ..., delta_q)``."""
        return np.concatenate([np.asarray(d_hat, dtype=float)] + list(self.delta), axis=-1)


def chain(blocks, rho_hat, d_hat, theta, q=2):
    """Run the derivative chain to depth ``q``.

    Inputs may carry leading batch axes (for example one row per trace
    sample); the trailing axis holds the vector.
    """
    if q < 1:
        raise ValueError("chain depth must be at least 1")
    orders = blocks.order.orders
    M, N = blocks.M, blocks.N
    rho = np.asarray(rho_hat, dtype=float)
    d = np.asarray(d_hat, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if rho.shape[-1] != M.shape[0] or theta.shape[-1] != M.shape[0] or d.shape[-1] != N.shape[1]:
        raise DimensionMismatch("chain inputs do not match the exosystem dimensions")
    eps = [rho @ M.T - d @ N.T]
    delta = [-regressor_apply(eps[0], theta, orders)]
    for _ in range(1, q):
        eps.append(eps[-1] @ M.T - delta[-1] @ N.T)
        delta.append(-regressor_apply(eps[-1], theta, orders))
    return DerivEstimates(eps, delta)
