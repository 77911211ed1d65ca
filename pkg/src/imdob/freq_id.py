"""Online frequency identification from observer outputs.

For channel i the observer supplies ``v_hat = (d_hat, delta_1, ..., delta_{r-1})``
and ``v_hat' = (delta_1, ..., delta_r)``. Sliding-window Grams

    S(t) = int_{t-T1}^t v_hat v_hat^T,    Y(t) = int_{t-T1}^t v_hat' v_hat^T

give ``Phi_hat = Y S^{-1}``, an estimate of the exosystem matrix. The
eigenvalues of ``-Phi_hat^2`` cluster in pairs around the squared
frequencies (plus one near zero when a constant is present).
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import matkit
from .errors import DimensionMismatch, NonMonotoneTime, OddSpectrum

COND_MAX = 1e8
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class NotReady:
    """Returned instead of an estimate while the window is unfilled or ill-conditioned."""
    reason: str
    condition: float = float("nan")

    def __bool__(self):
        return False


@dataclass
class FreqEstimate:
    omega_hat: np.ndarray
    constant_mode_present: bool
    cluster_gaps: np.ndarray
    condition: float = float("nan")
    spreads: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multiplicities: tuple = ()
    clamped: bool = False
    max_imag: float = 0.0
    removed: complex = None


def assemble_upsilon_hat(d_hat_i, deltas_i):
    """Stack ``(d_hat, delta_1..delta_{r-1})`` and its shifted derivative ``(delta_1..delta_r)``.

    ``deltas_i`` has the r derivative estimates on its last axis; leading
    axes (samples) broadcast with ``d_hat_i``.
    """
    deltas = np.asarray(deltas_i, dtype=float)
    d = np.asarray(d_hat_i, dtype=float)
    if deltas.ndim == 0 or deltas.shape[-1] < 1:
        raise DimensionMismatch("at least one derivative estimate is required")
    if d.shape != deltas.shape[:-1]:
        raise DimensionMismatch(f"d_hat shape {d.shape} does not match deltas {deltas.shape}")
    ups = np.concatenate([d[..., None], deltas[..., :-1]], axis=-1)
    return ups, deltas.copy()


class FreqIdWindow:
    """Trapezoidal sliding-window Grams for one channel.

    The buffer keeps the shortest run of samples whose time span is at
    least ``T1``; the running sums are rebuilt from scratch every
    ``resum_every`` updates to keep rounding drift bounded.
    """

    def __init__(self, r, T1, resum_every=5000):
        if T1 <= 0:
            raise ValueError("window length must be positive")
        self.r = int(r)
        self.T1 = float(T1)
        self.resum_every = int(resum_every)
        self.buf = deque()
        self.S = np.zeros((self.r, self.r))
        self.Y = np.zeros((self.r, self.r))
        self._count = 0

    @property
    def span(self):
        return self.buf[-1][0] - self.buf[0][0] if len(self.buf) > 1 else 0.0

    @property
    def full(self):
        return self.span >= self.T1 * (1.0 - 1e-12)

    @staticmethod
    def _segment(a, b):
        (t0, u0, v0), (t1, u1, v1) = a, b
        h = 0.5 * (t1 - t0)
        return h * (np.outer(u0, u0) + np.outer(u1, u1)), h * (np.outer(v0, u0) + np.outer(v1, u1))

    def update(self, t, ups, ups_dot):
        ups = np.asarray(ups, dtype=float)
        ups_dot = np.asarray(ups_dot, dtype=float)
        if ups.shape != (self.r,) or ups_dot.shape != (self.r,):
            raise DimensionMismatch(f"samples must have length {self.r}")
        if self.buf and not t > self.buf[-1][0]:
            raise NonMonotoneTime(f"time {t} does not follow {self.buf[-1][0]}")
        sample = (float(t), ups.copy(), ups_dot.copy())
        if self.buf:
            dS, dY = self._segment(self.buf[-1], sample)
            self.S += dS
            self.Y += dY
        self.buf.append(sample)
        tol = self.T1 * 1e-12
        while len(self.buf) > 2 and t - self.buf[1][0] >= self.T1 - tol:
            dS, dY = self._segment(self.buf[0], self.buf[1])
            self.S -= dS
            self.Y -= dY
            self.buf.popleft()
        self._count += 1
        if self._count % self.resum_every == 0:
            self.resum()
        return self

    def resum(self):
        """Recompute both Grams from the buffered samples."""
        S = np.zeros((self.r, self.r))
        Y = np.zeros((self.r, self.r))
        items = list(self.buf)
        for a, b in zip(items[:-1], items[1:]):
            dS, dY = self._segment(a, b)
            S += dS
            Y += dY
        self.S, self.Y = S, Y
        return S, Y


def window_update(w, t, sample):
    """Push ``sample = (ups, ups_dot)`` at time ``t``; returns the window."""
    return w.update(t, *sample)


def phi_from_grams(S, Y, cond_max=COND_MAX):
    S = 0.5 * (S + S.T)
    if not np.any(S):
        return NotReady("zero Gram")
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > cond_max:
        return NotReady("ill-conditioned Gram", float(cond))
    return np.linalg.solve(S, Y.T).T, float(cond)


def phi_hat(w, cond_max=COND_MAX):
    """``Y S^{-1}`` for a full, well-conditioned window, otherwise ``NotReady``."""
    if not w.full:
        return NotReady("window not full")
    out = phi_from_grams(w.S, w.Y, cond_max)
    return out if isinstance(out, NotReady) else out[0]


def _pair(mu):
    """Pair eigenvalues: conjugates first, then sorted reals side by side."""
    cplx = [m for m in mu if abs(m.imag) > _IMAG_TOL * max(1.0, abs(m))]
    real = sorted((m for m in mu if abs(m.imag) <= _IMAG_TOL * max(1.0, abs(m))), key=lambda z: z.real)
    pairs = []
    pos = sorted((m for m in cplx if m.imag > 0), key=lambda z: z.real)
    neg = [m for m in cplx if m.imag < 0]
    for m in pos:
        if not neg:
            real.append(m)
            continue
        k = int(np.argmin([abs(n - m.conjugate()) for n in neg]))
        pairs.append((m, neg.pop(k)))
    # an orphan (its partner went with the constant mode) pairs by real part
    real = sorted(real + neg, key=lambda z: z.real)
    for a, b in zip(real[0::2], real[1::2]):
        pairs.append((a, b))
    return pairs


def cluster_frequencies(phi, has_constant, condition=float("nan")):
    """Frequencies from the eigenvalue clusters of ``-phi^2``.

    Parameters
    ----------
    phi : ndarray, shape (r, r)
        Estimated exosystem matrix.
    has_constant : bool
        Whether one eigenvalue near zero belongs to a constant mode.
    condition : float, optional
        Condition number of the Gram that produced ``phi``, passed through.

    Returns
    -------
    FreqEstimate
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise DimensionMismatch("phi must be square")
    mu = list(matkit.eigvals(-phi @ phi))
    removed = None
    if has_constant:
        removed = mu.pop(int(np.argmin(np.abs(mu))))
    if len(mu) % 2:
        raise OddSpectrum(f"{len(mu)} eigenvalues remain after constant-mode removal")
    pairs = _pair(mu)
    centers = np.array([0.5 * (a + b) for a, b in pairs], dtype=complex)
    max_imag = float(np.abs(centers.imag).max()) if centers.size else 0.0
    Omega = centers.real
    order = np.argsort(Omega)
    Omega = Omega[order]
    spreads = np.array([abs(a - b) for a, b in pairs])[order]
    clamped = bool(np.any(Omega < 0))
    omega = np.sqrt(np.maximum(Omega, 0.0))
    gaps = np.diff(Omega)
    if Omega.size:
        radius = 0.5 * (gaps.min() if gaps.size else max(abs(Omega[0]), 1e-12))
        mult = tuple(int(np.sum(np.abs(np.array(mu) - c) <= radius)) for c in Omega)
    else:
        mult = ()
    return FreqEstimate(omega, has_constant, gaps, condition, spreads, mult, clamped,
                        max_imag, removed)


# ---------------------------------------------------------------------------
# whole-trace identification


def cumulative_grams(t, ups, ups_dot):
    """Running trapezoidal integrals of ``v v^T`` and ``v' v^T`` from ``t[0]``."""
    ups = np.asarray(ups, dtype=float)
    ups_dot = np.asarray(ups_dot, dtype=float)
    h = 0.5 * np.diff(t)[:, None, None]
    oS = ups[:, :, None] * ups[:, None, :]
    oY = ups_dot[:, :, None] * ups[:, None, :]
    cS = np.zeros_like(oS)
    cY = np.zeros_like(oY)
    np.cumsum(h * (oS[1:] + oS[:-1]), axis=0, out=cS[1:])
    np.cumsum(h * (oY[1:] + oY[:-1]), axis=0, out=cY[1:])
    return cS, cY


@dataclass
class IdentTrace:
    """Identifier outputs held between polls (NaN before the first estimate)."""
    omega_hat: np.ndarray
    condition: np.ndarray
    phi_error: np.ndarray
    multiplicities: np.ndarray
    ready: np.ndarray
    estimates: dict


def identify_trace(t, ups, ups_dot, T1, has_constant, n_freq, stride=100,
                   cond_max=COND_MAX, phi_true=None):
    """Poll the identifier every ``stride`` samples of a uniformly sampled run.

    The estimate is held constant between polls. ``phi_true`` (optional)
    adds the column ``||Phi_hat - Phi||_F``.
    """
    t = np.asarray(t, dtype=float)
    n = t.size
    step = t[1] - t[0]
    W = int(round(T1 / step))
    cS, cY = cumulative_grams(t, ups, ups_dot)
    omega = np.full((n, n_freq), np.nan)
    cond = np.full(n, np.nan)
    perr = np.full(n, np.nan)
    mult = np.zeros((n, n_freq), dtype=np.int64)
    ready = np.zeros(n, dtype=bool)
    estimates = {}
    polls = list(range(W, n, stride))
    for a, k in enumerate(polls):
        end = polls[a + 1] if a + 1 < len(polls) else n
        out = phi_from_grams(cS[k] - cS[k - W], cY[k] - cY[k - W], cond_max)
        if isinstance(out, NotReady):
            cond[k:end] = out.condition
            continue
        phi, c = out
        try:
            est = cluster_frequencies(phi, has_constant, c)
        except OddSpectrum:
            continue
        estimates[k] = est
        cond[k:end] = c
        ready[k:end] = True
        if est.omega_hat.size == n_freq:
            omega[k:end] = est.omega_hat
            mult[k:end] = est.multiplicities
        if phi_true is not None:
            perr[k:end] = np.linalg.norm(phi - phi_true)
    return IdentTrace(omega, cond, perr, mult, ready, estimates)
