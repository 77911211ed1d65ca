"""Trigonometric-polynomial disturbances and their exosystem realizations.

Each disturbance channel is ``d_i(t) = a_i0 + sum_j a_ij sin(w_ij t + phi_ij)``.
A channel of model order ``r`` is realized by ``v' = Phi v``, ``d = Gamma v``
with ``v = (d, d', ..., d^(r-1))`` and ``Phi`` the companion matrix of a
zeroing polynomial of degree ``r``. The observer-side coordinates are
``rho = -T v`` where ``T Phi - M T = N Gamma``.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from numba import njit

from . import matkit
from .errors import DimensionMismatch, DuplicateFrequency, WindowTooShort

_FREQ_WARN = 1e3


@dataclass(frozen=True)
class Mode:
    amplitude: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class ChannelSpec:
    offset: float = 0.0
    modes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(
            m if isinstance(m, Mode) else Mode(*m) for m in self.modes))
        freqs = [m.frequency for m in self.modes]
        if any(not (w > 0.0) for w in freqs):
            raise ValueError(f"frequencies must be strictly positive, got {freqs}")
        if len(set(freqs)) != len(freqs):
            raise DuplicateFrequency(f"repeated frequency in {freqs}")
        if any(m.amplitude == 0.0 for m in self.modes):
            raise ValueError("active modes must have nonzero amplitude")

    @property
    def frequencies(self):
        return tuple(m.frequency for m in self.modes)

    @property
    def minimal_order(self):
        return 2 * len(self.modes) + (1 if self.offset != 0.0 else 0)


@dataclass(frozen=True)
class DisturbanceSpec:
    channels: tuple

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ValueError("disturbance needs at least one channel")

    @property
    def n_channels(self):
        return len(self.channels)

    def kernel_arrays(self):
        """Flat arrays ``(a0, mode_channel, amplitude, frequency, phase)`` for jitted code."""
        a0 = np.array([c.offset for c in self.channels], dtype=float)
        rows = [(i, m.amplitude, m.frequency, m.phase)
                for i, c in enumerate(self.channels) for m in c.modes]
        if rows:
            ch, amp, w, ph = (np.array(col) for col in zip(*rows))
        else:
            ch, amp, w, ph = np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0)
        return a0, ch.astype(np.int64), amp.astype(float), w.astype(float), ph.astype(float)


@dataclass(frozen=True)
class ModelOrder:
    """Per-channel realization dimension and constant-mode hint."""
    orders: tuple
    has_constant: tuple

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(int(r) for r in self.orders))
        object.__setattr__(self, "has_constant", tuple(bool(c) for c in self.has_constant))
        if len(self.orders) != len(self.has_constant):
            raise DimensionMismatch("orders and has_constant differ in length")
        if any(r < 1 for r in self.orders):
            raise ValueError(f"orders must be positive, got {self.orders}")

    @classmethod
    def minimal(cls, spec):
        return cls(tuple(max(c.minimal_order, 1) for c in spec.channels),
                   tuple(c.offset != 0.0 for c in spec.channels))

    @classmethod
    def default(cls, spec):
        """Constant mode assumed present in every channel (overmodels by one if absent)."""
        return cls(tuple(2 * len(c.modes) + 1 for c in spec.channels),
                   (True,) * spec.n_channels)

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.orders))).astype(np.int64)

    @property
    def r_bar(self):
        return int(sum(self.orders))

    def n_frequencies(self, i):
        return (self.orders[i] - int(self.has_constant[i])) // 2


def zeroing_coeffs(frequencies, has_constant):
    """Coefficients ``beta`` with ``l^r - beta_r l^(r-1) - ... - beta_1 = prod (l^2 + w^2)`` (times ``l``).

    >>> zeroing_coeffs([2.0], False)
    array([-4.,  0.])
    """
    freqs = [float(w) for w in frequencies]
    if len(set(freqs)) != len(freqs):
        raise DuplicateFrequency(f"repeated frequency in {freqs}")
    if any(not (w > 0.0) for w in freqs):
        raise ValueError(f"frequencies must be strictly positive, got {freqs}")
    if any(w > _FREQ_WARN for w in freqs):
        warnings.warn("frequencies above 1e3 rad/s give badly scaled zeroing polynomials",
                      RuntimeWarning, stacklevel=2)
    poly = np.array([1.0])  # ascending coefficients
    for w in freqs:
        poly = np.convolve(poly, [w * w, 0.0, 1.0])
    if has_constant:
        poly = np.concatenate(([0.0], poly))
    if poly.size == 1:
        raise ValueError("empty zeroing polynomial: no modes and no constant")
    return -poly[:-1] + 0.0


def _block_diag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


@dataclass
class ExoBlocks:
    spec: DisturbanceSpec
    order: ModelOrder
    Phi_i: list
    Gamma_i: list
    M_i: list
    N_i: list
    T_i: list
    Psi_i: list
    Phi: np.ndarray = field(init=False)
    Gamma: np.ndarray = field(init=False)
    M: np.ndarray = field(init=False)
    N: np.ndarray = field(init=False)
    T: np.ndarray = field(init=False)
    Psi: np.ndarray = field(init=False)

    def __post_init__(self):
        self.Phi = _block_diag(self.Phi_i)
        self.Gamma = _block_diag(self.Gamma_i)
        self.M = _block_diag(self.M_i)
        self.N = _block_diag(self.N_i)
        self.T = _block_diag(self.T_i)
        self.Psi = _block_diag(self.Psi_i)

    @property
    def theta_star(self):
        """Parameter vector ``col(Psi_1^T, ..., Psi_n^T)`` the adaptation law converges to under PE."""
        return np.concatenate([p.ravel() for p in self.Psi_i])

    @property
    def minimal(self):
        return tuple(r == max(c.minimal_order, 1)
                     for r, c in zip(self.order.orders, self.spec.channels))


def build_exo_blocks(spec, order=None, m_spectra=None):
    """Assemble all exosystem and internal-model matrices for a disturbance.

    Parameters
    ----------
    spec : DisturbanceSpec
    order : ModelOrder, optional
        Defaults to the minimal realization. Orders above the minimal one
        use the zeroing polynomial ``l^e prod(l^2 + w^2)``.
    m_spectra : sequence of sequences, optional
        Eigenvalues of each ``M_i``; default ``-1, -2, ..., -r_i``.
    """
    order = ModelOrder.minimal(spec) if order is None else order
    if len(order.orders) != spec.n_channels:
        raise DimensionMismatch(
            f"model order has {len(order.orders)} channels, disturbance has {spec.n_channels}")
    if m_spectra is None:
        m_spectra = [list(-np.arange(1.0, r + 1)) for r in order.orders]
    if len(m_spectra) != spec.n_channels:
        raise DimensionMismatch("one M spectrum per channel is required")
    blocks = {k: [] for k in ("Phi_i", "Gamma_i", "M_i", "N_i", "T_i", "Psi_i")}
    for i, (ch, r) in enumerate(zip(spec.channels, order.orders)):
        if r < ch.minimal_order:
            raise ValueError(f"channel {i}: order {r} below minimal order {ch.minimal_order}")
        extra = r - 2 * len(ch.modes)
        beta = np.zeros(r)
        if ch.modes:
            beta[extra:] = zeroing_coeffs(ch.frequencies, False)
        Phi_i = matkit.companion_bottom_row(beta)
        if len(m_spectra[i]) != r:
            raise DimensionMismatch(f"channel {i}: M spectrum needs {r} eigenvalues")
        M_i = matkit.companion_from_roots(m_spectra[i])
        if not matkit.is_hurwitz(M_i):
            raise ValueError(f"channel {i}: M spectrum {m_spectra[i]} is not Hurwitz")
        N_i = np.zeros((r, 1))
        N_i[-1, 0] = 1.0
        Gamma_i = np.zeros((1, r))
        Gamma_i[0, 0] = 1.0
        T_i = matkit.solve_sylvester(Phi_i, M_i, N_i, Gamma_i)
        Psi_i = Gamma_i @ np.linalg.inv(T_i)
        for k, v in zip(blocks, (Phi_i, Gamma_i, M_i, N_i, T_i, Psi_i)):
            blocks[k].append(v)
    return ExoBlocks(spec, order, **blocks)


# ---------------------------------------------------------------------------
# ground truth


@njit(cache=True)
def _disturbance_kernel(t, a0, chan, amp, w, ph, k):
    out = np.zeros(a0.size)
    if k == 0:
        out[:] = a0
    for j in range(amp.size):
        out[chan[j]] += amp[j] * w[j] ** k * math.sin(w[j] * t + ph[j] + 0.5 * k * math.pi)
    return out


def disturbance_derivs(spec, t, k_max=0):
    """``d^(k)(t)`` for ``k = 0..k_max``; shape ``(k_max + 1, *t.shape, n_channels)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((k_max + 1,) + t.shape + (spec.n_channels,))
    for i, ch in enumerate(spec.channels):
        out[0, ..., i] = ch.offset
        for m in ch.modes:
            for k in range(k_max + 1):
                out[k, ..., i] += (m.amplitude * m.frequency ** k
                                   * np.sin(m.frequency * t + m.phase + 0.5 * k * np.pi))
    return out


@dataclass
class Truth:
    d: np.ndarray
    derivs: np.ndarray
    upsilon: np.ndarray = None
    rho: np.ndarray = None
    rho_derivs: np.ndarray = None


def eval_truth(spec, t, k_max=0, blocks=None):
    """Closed-form disturbance, its derivatives and (given ``blocks``) the exosystem states.

    ``t`` may be a scalar or an array; leading axes of the outputs follow it.
    ``rho_derivs[k]`` is the k-th time derivative of ``rho = -T v``.
    """
    t = np.asarray(t, dtype=float)
    if blocks is None:
        D = disturbance_derivs(spec, t, k_max)
        return Truth(d=D[0], derivs=D)
    r_max = max(blocks.order.orders)
    D = disturbance_derivs(spec, t, k_max + r_max)
    offs = blocks.order.offsets
    rho_derivs = []
    ups0 = None
    for k in range(k_max + 1):
        ups = np.zeros(t.shape + (blocks.order.r_bar,))
        for i, r in enumerate(blocks.order.orders):
            ups[..., offs[i]:offs[i + 1]] = np.moveaxis(D[k:k + r, ..., i], 0, -1)
        if k == 0:
            ups0 = ups
        rho_derivs.append(-ups @ blocks.T.T)
    rho_derivs = np.stack(rho_derivs)
    return Truth(d=D[0], derivs=D[:k_max + 1], upsilon=ups0, rho=rho_derivs[0],
                 rho_derivs=rho_derivs)


# ---------------------------------------------------------------------------
# persistent excitation


@dataclass
class PEResult:
    pe_metric: float
    satisfied: bool


def windowed_grams(samples, dt, window):
    """Trapezoidal ``int w w^T`` over every window of ``window`` steps (stride one sample)."""
    w = np.asarray(samples, dtype=float)
    outer = w[:, :, None] * w[:, None, :]
    cum = np.zeros_like(outer)
    np.cumsum(0.5 * dt * (outer[1:] + outer[:-1]), axis=0, out=cum[1:])
    return cum[window:] - cum[:-window]


def is_pe_window(samples, dt, T0, alpha=1e-4):
    """Persistent-excitation level of a uniformly sampled vector signal.

    ``pe_metric`` is the minimum, over all window starts, of the smallest
    eigenvalue of the trapezoidal Gram over ``[t, t + T0]``.
    """
    w = np.asarray(samples, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    window = int(round(T0 / dt))
    if window < 1 or w.shape[0] < window + 1:
        raise WindowTooShort(f"{w.shape[0]} samples do not cover T0={T0} at dt={dt}")
    S = windowed_grams(w, dt, window)
    lam = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)))[:, 0]
    metric = float(lam.min())
    return PEResult(metric, metric >= alpha)
