"""Two-link flexible-joint manipulator, reference trajectory and tracking controller.

The plant is written in Euler-Lagrange form with actuator chain

    H(q) q'' + C(q, q') q' + G(q) = xi1,   xi1' = xi2,   xi2' = tau + d,

with ``G(q) = g(q) + K0 q``. The controller uses the reference velocity
``qr' = qd' - alpha (q - qd)``, the sliding variable ``s = q' - qr'`` and
the virtual input ``xi_r = -Ks s + H qr'' + C qr' + G``. Its first two time
derivatives ``zeta1``, ``zeta2`` are evaluated exactly with truncated
Taylor jets ``(f, f', f'')`` propagated through the model nonlinearities.
"""
from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np
from numba import njit

from . import matkit
from .errors import SingularInertia

# reference q_d = (A1 sin(W1 t), A2 cos(W2 t))
REF_AMPLITUDE = (3.0, 4.0)
REF_FREQUENCY = (math.pi / 100.0, 2.0 * math.pi / 100.0)
_COND_MAX = 1e12


@dataclass
class PlantState:
    q: np.ndarray
    q_dot: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray

    def to_vector(self):
        return np.concatenate([self.q, self.q_dot, self.xi1, self.xi2]).astype(float)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:2].copy(), x[2:4].copy(), x[4:6].copy(), x[6:8].copy())


@dataclass
class ControllerGains:
    alpha: float = 1.0
    Ks: np.ndarray = field(default_factory=lambda: np.eye(2))
    kp1: float = 25.0
    kp2: float = 10.0
    K0: np.ndarray = field(default_factory=lambda: np.eye(2))
    J: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        self.Ks = np.asarray(self.Ks, dtype=float).reshape(2, 2)
        self.K0 = np.asarray(self.K0, dtype=float).reshape(2, 2)
        self.J = np.asarray(self.J, dtype=float).reshape(2, 2)
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not np.allclose(self.Ks, self.Ks.T) or np.linalg.eigvalsh(self.Ks)[0] <= 0:
            raise ValueError("Ks must be symmetric positive definite")
        if not (self.kp1 > 0 and self.kp2 > 0):
            raise ValueError("kp1 and kp2 must be positive for a Hurwitz error polynomial")

    @property
    def A_c(self):
        Z, I = np.zeros((2, 2)), np.eye(2)
        return np.block([[Z, I], [-self.kp1 * I, -self.kp2 * I]])

    @property
    def B_c(self):
        return np.vstack([np.zeros((2, 2)), np.eye(2)])

    @property
    def P_c(self):
        return matkit.solve_lyapunov(self.A_c)

    @property
    def c1(self):
        """Lyapunov weight just above ``1 / (2 lambda_min(Ks)) + 1``."""
        return 1.0 / (2.0 * np.linalg.eigvalsh(self.Ks)[0]) + 1.01


class ManipulatorTerms(NamedTuple):
    H: np.ndarray
    C: np.ndarray
    g: np.ndarray


class Reference(NamedTuple):
    q_d: np.ndarray
    q_d_dot: np.ndarray
    q_d_ddot: np.ndarray
    q_d_3: np.ndarray
    q_d_4: np.ndarray


class ControlOutput(NamedTuple):
    tau: np.ndarray
    s: np.ndarray
    xi_tilde: np.ndarray
    xi_r: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray


# ---------------------------------------------------------------------------
# jet arithmetic on (f, f', f'') tuples


@njit(cache=True, inline="always")
def _jadd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True, inline="always")
def _jsub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True, inline="always")
def _jscale(c, a):
    return (c * a[0], c * a[1], c * a[2])


@njit(cache=True, inline="always")
def _jmul(a, b):
    return (a[0] * b[0], a[1] * b[0] + a[0] * b[1], a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2])


@njit(cache=True, inline="always")
def _jcos(a):
    c, s = math.cos(a[0]), math.sin(a[0])
    return (c, -s * a[1], -c * a[1] * a[1] - s * a[2])


@njit(cache=True, inline="always")
def _jsin(a):
    c, s = math.cos(a[0]), math.sin(a[0])
    return (s, c * a[1], -s * a[1] * a[1] + c * a[2])


@njit(cache=True)
def _reference_kernel(t, k):
    """k-th derivative of the reference at time t."""
    a1, a2 = REF_AMPLITUDE
    w1, w2 = REF_FREQUENCY
    ph = 0.5 * k * math.pi
    return (a1 * w1 ** k * math.sin(w1 * t + ph), a2 * w2 ** k * math.cos(w2 * t + ph))


@njit(cache=True)
def _terms_jets(Q1, Q2, V1, V2):
    """Jets of the entries of H, C and g given jets of q and q'."""
    c2 = _jcos(Q2)
    s2 = _jsin(Q2)
    c1 = _jcos(Q1)
    c12 = _jcos(_jadd(Q1, Q2))
    H11 = _jadd((2.35, 0.0, 0.0), _jscale(0.16, c2))
    H12 = _jadd((0.10, 0.0, 0.0), _jscale(0.08, c2))
    H22 = (0.10, 0.0, 0.0)
    C11 = _jscale(-0.08, _jmul(s2, V2))
    C12 = _jscale(-0.08, _jmul(s2, _jadd(V1, V2)))
    C21 = _jscale(0.08, _jmul(s2, V1))
    g1 = _jadd(_jscale(38.47, c1), _jscale(1.83, c12))
    g2 = _jscale(1.83, c12)
    return H11, H12, H22, C11, C12, C21, g1, g2


@njit(cache=True)
def _solve2(a11, a12, a21, a22, b1, b2):
    det = a11 * a22 - a12 * a21
    return (a22 * b1 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det


@njit(cache=True)
def _accel(x, K0):
    """Joint acceleration from the plant state."""
    q1, q2, v1, v2 = x[0], x[1], x[2], x[3]
    c2, s2 = math.cos(q2), math.sin(q2)
    h11 = 2.35 + 0.16 * c2
    h12 = 0.10 + 0.08 * c2
    c12 = math.cos(q1 + q2)
    g1 = 38.47 * math.cos(q1) + 1.83 * c12
    g2 = 1.83 * c12
    cv1 = -0.08 * s2 * v2 * v1 - 0.08 * s2 * (v1 + v2) * v2
    cv2 = 0.08 * s2 * v1 * v1
    b1 = x[4] - cv1 - g1 - (K0[0, 0] * q1 + K0[0, 1] * q2)
    b2 = x[5] - cv2 - g2 - (K0[1, 0] * q1 + K0[1, 1] * q2)
    return _solve2(h11, h12, h12, 0.10, b1, b2)


@njit(cache=True)
def _plant_kernel(x, tau, d, K0, out):
    a1, a2 = _accel(x, K0)
    out[0] = x[2]
    out[1] = x[3]
    out[2] = a1
    out[3] = a2
    out[4] = x[6]
    out[5] = x[7]
    out[6] = tau[0] + d[0]
    out[7] = tau[1] + d[1]


@njit(cache=True)
def _xi_r_jets(Q1, Q2, V1, V2, t, alpha, Ks, K0):
    r0 = _reference_kernel(t, 0)
    r1 = _reference_kernel(t, 1)
    r2 = _reference_kernel(t, 2)
    r3 = _reference_kernel(t, 3)
    r4 = _reference_kernel(t, 4)
    D1 = (r0[0], r1[0], r2[0])
    D2 = (r0[1], r1[1], r2[1])
    DV1 = (r1[0], r2[0], r3[0])
    DV2 = (r1[1], r2[1], r3[1])
    DA1 = (r2[0], r3[0], r4[0])
    DA2 = (r2[1], r3[1], r4[1])
    # qr' = qd' - alpha (q - qd), qr'' = qd'' - alpha (q' - qd'), s = q' - qr'
    Vr1 = _jsub(DV1, _jscale(alpha, _jsub(Q1, D1)))
    Vr2 = _jsub(DV2, _jscale(alpha, _jsub(Q2, D2)))
    Ar1 = _jsub(DA1, _jscale(alpha, _jsub(V1, DV1)))
    Ar2 = _jsub(DA2, _jscale(alpha, _jsub(V2, DV2)))
    S1 = _jsub(V1, Vr1)
    S2 = _jsub(V2, Vr2)
    H11, H12, H22, C11, C12, C21, g1, g2 = _terms_jets(Q1, Q2, V1, V2)
    y1 = _jadd(_jadd(_jmul(H11, Ar1), _jmul(H12, Ar2)), _jadd(_jmul(C11, Vr1), _jmul(C12, Vr2)))
    y2 = _jadd(_jadd(_jmul(H12, Ar1), _jmul(H22, Ar2)), _jmul(C21, Vr1))
    G1 = _jadd(g1, _jadd(_jscale(K0[0, 0], Q1), _jscale(K0[0, 1], Q2)))
    G2 = _jadd(g2, _jadd(_jscale(K0[1, 0], Q1), _jscale(K0[1, 1], Q2)))
    X1 = _jsub(_jadd(y1, G1), _jadd(_jscale(Ks[0, 0], S1), _jscale(Ks[0, 1], S2)))
    X2 = _jsub(_jadd(y2, G2), _jadd(_jscale(Ks[1, 0], S1), _jscale(Ks[1, 1], S2)))
    return X1, X2, S1[0], S2[0]


@njit(cache=True)
def _controller_kernel(t, x, alpha, Ks, K0):
    """``(xi_r, zeta1, zeta2, s)`` as 2-vectors stacked in an (4, 2) array."""
    a1, a2 = _accel(x, K0)
    Q1 = (x[0], x[2], a1)
    Q2 = (x[1], x[3], a2)
    # first pass: only first derivatives of H, C, g are needed for q'''
    H11, H12, H22, C11, C12, C21, g1, g2 = _terms_jets(Q1, Q2, (x[2], a1, 0.0), (x[3], a2, 0.0))
    rhs1 = (x[6] - H11[1] * a1 - H12[1] * a2 - C11[1] * x[2] - C11[0] * a1
            - C12[1] * x[3] - C12[0] * a2 - g1[1] - K0[0, 0] * x[2] - K0[0, 1] * x[3])
    rhs2 = (x[7] - H12[1] * a1 - H22[1] * a2 - C21[1] * x[2] - C21[0] * a1
            - g2[1] - K0[1, 0] * x[2] - K0[1, 1] * x[3])
    j1, j2 = _solve2(H11[0], H12[0], H12[0], H22[0], rhs1, rhs2)
    X1, X2, s1, s2 = _xi_r_jets(Q1, Q2, (x[2], a1, j1), (x[3], a2, j2), t, alpha, Ks, K0)
    out = np.empty((4, 2))
    out[0, 0], out[0, 1] = X1[0], X2[0]
    out[1, 0], out[1, 1] = X1[1], X2[1]
    out[2, 0], out[2, 1] = X1[2], X2[2]
    out[3, 0], out[3, 1] = s1, s2
    return out


@njit(cache=True)
def _tau_kernel(t, x, d_hat, alpha, Ks, kp1, kp2, K0, tau):
    z = _controller_kernel(t, x, alpha, Ks, K0)
    for i in range(2):
        tau[i] = z[2, i] - kp1 * (x[4 + i] - z[0, i]) - kp2 * (x[6 + i] - z[1, i]) - d_hat[i]
    return z


# ---------------------------------------------------------------------------
# public API


def _state_vector(state):
    if isinstance(state, PlantState):
        return state.to_vector()
    x = np.asarray(state, dtype=float)
    if x.shape != (8,):
        raise ValueError(f"plant state must have 8 entries, got shape {x.shape}")
    return x


def manipulator_terms(q, q_dot):
    """Inertia, Coriolis and gravity terms of the two-link arm.

    Parameters
    ----------
    q, q_dot : array_like, shape (2,)
        Link angles and velocities.

    Returns
    -------
    ManipulatorTerms
        ``H`` (symmetric 2x2), ``C`` (2x2) and ``g`` (2,).
    """
    q1, q2 = np.asarray(q, dtype=float)
    v1, v2 = np.asarray(q_dot, dtype=float)
    c2, s2 = math.cos(q2), math.sin(q2)
    H = np.array([[2.35 + 0.16 * c2, 0.10 + 0.08 * c2], [0.10 + 0.08 * c2, 0.10]])
    C = 0.08 * s2 * np.array([[-v2, -(v1 + v2)], [v1, 0.0]])
    c12 = math.cos(q1 + q2)
    g = np.array([38.47 * math.cos(q1) + 1.83 * c12, 1.83 * c12])
    return ManipulatorTerms(H, C, g)


def plant_rhs(state, tau, d, K0=None):
    """Time derivative of the plant state.

    Returns a vector ordered like ``PlantState.to_vector``.
    """
    x = _state_vector(state)
    K0 = np.eye(2) if K0 is None else np.asarray(K0, dtype=float)
    H = manipulator_terms(x[0:2], x[2:4]).H
    if np.linalg.cond(H) > _COND_MAX:
        raise SingularInertia(f"inertia matrix condition {np.linalg.cond(H):.3g}")
    out = np.empty(8)
    _plant_kernel(x, np.asarray(tau, dtype=float), np.asarray(d, dtype=float), K0, out)
    return out


def reference(t):
    """Reference trajectory and its first four derivatives at time ``t``."""
    return Reference(*(np.array(_reference_kernel(float(t), k)) for k in range(5)))


def control_step(state, t, d_hat, gains):
    """Control torque and error signals at one instant.

    ``tau = zeta2 - kp1 (xi1 - xi_r) - kp2 (xi2 - zeta1) - d_hat``
    """
    x = _state_vector(state)
    tau = np.empty(2)
    z = _tau_kernel(float(t), x, np.asarray(d_hat, dtype=float), gains.alpha, gains.Ks,
                    gains.kp1, gains.kp2, gains.K0, tau)
    xi_tilde = np.concatenate([x[4:6] - z[0], x[6:8] - z[1]])
    return ControlOutput(tau, z[3].copy(), xi_tilde, z[0].copy(), z[1].copy(), z[2].copy())


def lyapunov_value(state, s, xi_tilde, gains):
    """``V = s^T H s / 2 + c1 xi_tilde^T P_c xi_tilde``."""
    x = _state_vector(state)
    H = manipulator_terms(x[0:2], x[2:4]).H
    s = np.asarray(s, dtype=float)
    e = np.asarray(xi_tilde, dtype=float)
    return 0.5 * s @ H @ s + gains.c1 * e @ gains.P_c @ e
