"""Fixed-step simulation of the manipulator, internal model, observer and identifier.

The coupled state is ``y = (q, q', xi1, xi2, eta, x2_hat, theta)`` and is
integrated as one vector with classical RK4, so the observer sees the
plant output without a one-step delay. Every step is kept in memory for
analysis; the CSV export can be decimated.
"""
from dataclasses import dataclass, field, asdict
import hashlib
import io
import math

import numpy as np
from numba import njit

from . import exosystem as exo
from .deriv_chain import chain
from .errors import EmptyTrace, NonFiniteDerivative
from .exosystem import _disturbance_kernel
from .freq_id import assemble_upsilon_hat, identify_trace
from .internal_model import _im_kernel, d0_hat
from .observer import ObserverGains, _obs_kernel, regressor_apply
from .plant import ControllerGains, _plant_kernel, _tau_kernel

MODES = ("observe_only", "known_frequency", "track_and_reject", "freq_id")
_FEEDFORWARD = {"observe_only": 0, "known_frequency": 2, "track_and_reject": 1, "freq_id": 1}
N_PLANT = 8
N2 = 2
NOISE_FLOOR = 1e-9


@dataclass
class InitialCondition:
    """Random draws from ``U[low, high]`` or explicit vectors (zeros where omitted)."""
    random: bool = True
    range: tuple = (-2.0, 2.0)
    values: dict = field(default_factory=dict)

    def draw(self, rng, r_bar):
        sizes = {"q": 2, "q_dot": 2, "xi1": 2, "xi2": 2, "eta": r_bar, "x2_hat": 2, "theta": r_bar}
        n = sum(sizes.values())
        if self.random:
            lo, hi = self.range
            y = rng.uniform(lo, hi, size=n)
        else:
            y = np.zeros(n)
        pos = 0
        for name, size in sizes.items():
            if name in self.values:
                v = np.asarray(self.values[name], dtype=float)
                if v.shape != (size,):
                    raise ValueError(f"initial.{name} needs {size} entries")
                y[pos:pos + size] = v
            pos += size
        return y


@dataclass
class FreqIdConfig:
    T1: float = 40.0
    cond_max: float = 1e8
    stride: int = 100


@dataclass
class AnalysisConfig:
    window_fraction: float = 0.1
    pe_window: float = 10.0
    pe_alpha: float = 1e-4
    pe_stride: int = 100


@dataclass
class Scenario:
    disturbance: exo.DisturbanceSpec
    order: exo.ModelOrder
    exo_m_spectra: list
    observer: ObserverGains
    controller: ControllerGains
    t_end: float = 200.0
    step: float = 1e-3
    seed: int = 0
    mode: str = "track_and_reject"
    initial: InitialCondition = field(default_factory=InitialCondition)
    freq_id: FreqIdConfig = field(default_factory=FreqIdConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    decimate: int = 10
    im_variant: str = "canonical"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.t_end < 10 * self.step:
            raise ValueError("t_end must cover at least ten steps")
        if self.im_variant not in ("canonical", "classical"):
            raise ValueError(f"unknown internal model variant {self.im_variant!r}")
        if self.disturbance.n_channels != N2:
            raise ValueError(f"the manipulator has {N2} disturbance channels")
        r_bar = self.order.r_bar
        if self.observer.Lambda.shape != (r_bar, r_bar):
            raise ValueError(f"Lambda must be {r_bar}x{r_bar} for model orders {self.order.orders}")
        if self.observer.K.shape != (N2, N2):
            raise ValueError(f"K must be {N2}x{N2}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.step))

    def blocks(self):
        return exo.build_exo_blocks(self.disturbance, self.order, self.exo_m_spectra)


# ---------------------------------------------------------------------------
# integration


def rk4_step(rhs, state, t, h):
    """One classical Runge-Kutta step of ``x' = rhs(t, x)``."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(rhs(t, x), dtype=float)
    k2 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(rhs(t + h, x + h * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFiniteDerivative(f"non-finite derivative near t={t:.6g}")
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _closed_loop_rhs(t, y, p, out):
    (M, N, K, P, Lam, offs, Psi, a0, chan, amp, w, ph,
     alpha, Ks, kp1, kp2, K0, J, ff_mode, classical) = p
    r = M.shape[0]
    x = y[:N_PLANT]
    eta = y[N_PLANT:N_PLANT + r]
    x2_hat = y[N_PLANT + r:N_PLANT + r + N2]
    theta = y[N_PLANT + r + N2:]
    x2 = x[6:8]
    d = _disturbance_kernel(t, a0, chan, amp, w, ph, 0)
    rho = eta.copy()
    for i in range(r):
        for j in range(N2):
            rho[i] -= N[i, j] * x2[j]
    ff = np.zeros(N2)
    if ff_mode == 1:
        for i in range(N2):
            for k in range(offs[i], offs[i + 1]):
                ff[i] -= rho[k] * theta[k]
    elif ff_mode == 2:
        for i in range(N2):
            for k in range(r):
                ff[i] -= Psi[i, k] * rho[k]
    tau = np.empty(N2)
    _tau_kernel(t, x, ff, alpha, Ks, kp1, kp2, K0, tau)
    _plant_kernel(x, tau, d, K0, out[:N_PLANT])
    feed = tau.copy()
    if classical:
        # physical motor input u0 = J K0^{-1} tau + K0 (q2 - q1) with xi1 = K0 q2
        det = K0[0, 0] * K0[1, 1] - K0[0, 1] * K0[1, 0]
        Kinv = np.empty((2, 2))
        Kinv[0, 0], Kinv[0, 1] = K0[1, 1] / det, -K0[0, 1] / det
        Kinv[1, 0], Kinv[1, 1] = -K0[1, 0] / det, K0[0, 0] / det
        for i in range(N2):
            acc = x[4 + i]
            for j in range(N2):
                acc -= K0[i, j] * x[j]
                for k in range(N2):
                    acc += J[i, k] * Kinv[k, j] * tau[j]
            feed[i] = acc
    _im_kernel(M, N, eta, x2, feed, out[N_PLANT:N_PLANT + r])
    _obs_kernel(rho, theta, x2_hat, x2, tau, K, P, Lam, offs,
                out[N_PLANT + r:N_PLANT + r + N2], out[N_PLANT + r + N2:])


@njit(cache=True)
def _integrate(y0, h, n, p):
    m = y0.size
    Y = np.empty((n + 1, m))
    Y[0] = y0
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    y = y0.copy()
    for i in range(n):
        t = i * h
        _closed_loop_rhs(t, y, p, k1)
        _closed_loop_rhs(t + 0.5 * h, y + 0.5 * h * k1, p, k2)
        _closed_loop_rhs(t + 0.5 * h, y + 0.5 * h * k2, p, k3)
        _closed_loop_rhs(t + h, y + h * k3, p, k4)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(m):
            if not np.isfinite(y[j]):
                return Y[:i + 1], i
        Y[i + 1] = y
    return Y, -1


@njit(cache=True)
def _control_rows(T, Y, ff, alpha, Ks, kp1, kp2, K0):
    n = T.size
    out = np.empty((n, 5, 2))
    tau = np.empty(2)
    for i in range(n):
        z = _tau_kernel(T[i], Y[i, :N_PLANT], ff[i], alpha, Ks, kp1, kp2, K0, tau)
        out[i, 0] = tau
        out[i, 1:] = z
    return out


def _params(sc, blocks):
    a0, chan, amp, w, ph = sc.disturbance.kernel_arrays()
    g = sc.controller
    return (np.ascontiguousarray(blocks.M), np.ascontiguousarray(blocks.N),
            sc.observer.K, sc.observer.P, sc.observer.Lambda, sc.order.offsets,
            np.ascontiguousarray(blocks.Psi), a0, chan, amp, w, ph,
            float(g.alpha), g.Ks, float(g.kp1), float(g.kp2), g.K0, g.J,
            _FEEDFORWARD[sc.mode], sc.im_variant == "classical")


# ---------------------------------------------------------------------------
# trace


@dataclass
class SimTrace:
    """Uniformly sampled run record; ``columns`` maps names to 1-D arrays."""
    scenario: Scenario
    blocks: exo.ExoBlocks
    columns: dict
    ident: object = None

    @property
    def t(self):
        return self.columns["t"]

    def __getitem__(self, name):
        return self.columns[name]

    def group(self, prefix):
        """Stack the columns ``prefix_0, prefix_1, ...`` into an array (n, k)."""
        keys = [k for k in self.columns if k.rsplit("_", 1)[0] == prefix and k.rsplit("_", 1)[1].isdigit()]
        keys.sort(key=lambda k: int(k.rsplit("_", 1)[1]))
        return np.stack([self.columns[k] for k in keys], axis=1)

    def to_csv(self, path=None, decimate=None):
        """Write (or return) the CSV text with 17 significant digits and LF line endings."""
        step = self.scenario.decimate if decimate is None else max(int(decimate), 1)
        names = list(self.columns)
        data = np.column_stack([np.asarray(self.columns[k], dtype=float) for k in names])[::step]
        buf = io.StringIO(newline="")
        buf.write(",".join(names) + "\n")
        np.savetxt(buf, data, fmt="%.17g", delimiter=",", newline="\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        return text

    def csv_sha256(self, decimate=None):
        return hashlib.sha256(self.to_csv(decimate=decimate).encode("utf-8")).hexdigest()


def _add(cols, prefix, arr):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[:, None]
    for j in range(arr.shape[1]):
        cols[f"{prefix}_{j}"] = arr[:, j]


def _pe_track(t, x, window, stride):
    """Sliding-window smallest Gram eigenvalue polled every ``stride`` samples, held between polls."""
    step = t[1] - t[0]
    W = int(round(window / step))
    out = np.full(t.size, np.nan)
    if W < 1 or t.size <= W:
        return out
    S = exo.windowed_grams(x, step, W)  # S[k] covers samples k..k+W
    idx = np.arange(0, S.shape[0], stride)
    lam = np.linalg.eigvalsh(0.5 * (S[idx] + np.swapaxes(S[idx], 1, 2)))[:, 0]
    for a, k in enumerate(idx):
        end = idx[a + 1] + W if a + 1 < idx.size else t.size
        out[k + W:end] = lam[a]
    return out


def run_scenario(sc):
    """Integrate the closed loop and assemble the full trace.

    Raises
    ------
    NonFiniteDerivative
        If the state leaves the finite range; the message carries the time.
    """
    blocks = sc.blocks()
    orders = sc.order.orders
    r = sc.order.r_bar
    rng = np.random.default_rng(sc.seed)
    y0 = sc.initial.draw(rng, r)
    p = _params(sc, blocks)
    n = sc.n_steps
    h = sc.step
    Y, fail = _integrate(y0, h, n, p)
    if fail >= 0:
        raise NonFiniteDerivative(f"state became non-finite at t={(fail + 1) * h:.6g}")
    t = np.arange(n + 1) * h

    x = Y[:, :N_PLANT]
    eta = Y[:, N_PLANT:N_PLANT + r]
    x2_hat = Y[:, N_PLANT + r:N_PLANT + r + N2]
    theta = Y[:, N_PLANT + r + N2:]
    x2 = x[:, 6:8]
    rho_hat = eta - x2 @ blocks.N.T
    dh = -regressor_apply(rho_hat, theta, orders)
    dh0 = d0_hat(rho_hat, blocks.Psi)
    ff = {0: np.zeros_like(dh), 1: dh, 2: dh0}[_FEEDFORWARD[sc.mode]]
    g = sc.controller
    ctl = _control_rows(t, Y, np.ascontiguousarray(ff), float(g.alpha), g.Ks, float(g.kp1),
                        float(g.kp2), g.K0)
    q_depth = max(2, max(orders))
    truth = exo.eval_truth(sc.disturbance, t, q_depth, blocks)
    ch = chain(blocks, rho_hat, dh, theta, q_depth)
    ref = np.stack([np.array(_ref_rows(t, k)) for k in range(2)])

    cols = {"t": t}
    _add(cols, "q", x[:, 0:2])
    _add(cols, "q_dot", x[:, 2:4])
    _add(cols, "xi1", x[:, 4:6])
    _add(cols, "xi2", x[:, 6:8])
    _add(cols, "eta", eta)
    _add(cols, "x2_hat", x2_hat)
    _add(cols, "theta", theta)
    _add(cols, "rho", truth.rho)
    _add(cols, "rho_hat", rho_hat)
    _add(cols, "d", truth.d)
    _add(cols, "d_hat", dh)
    _add(cols, "d0_hat", dh0)
    for k in range(q_depth):
        _add(cols, f"delta{k + 1}", ch.delta[k])
        _add(cols, f"d{k + 1}", truth.derivs[k + 1])
    _add(cols, "tau", ctl[:, 0])
    _add(cols, "xi_r", ctl[:, 1])
    _add(cols, "zeta1", ctl[:, 2])
    _add(cols, "zeta2", ctl[:, 3])
    _add(cols, "s", ctl[:, 4])
    _add(cols, "q_d", ref[0])
    _add(cols, "q_d_dot", ref[1])
    _add(cols, "e_q", x[:, 0:2] - ref[0])
    _add(cols, "e_q_dot", x[:, 2:4] - ref[1])
    xi_tilde = np.concatenate([x[:, 4:6] - ctl[:, 1], x[:, 6:8] - ctl[:, 2]], axis=1)
    _add(cols, "xi_tilde", xi_tilde)
    s = ctl[:, 4]
    c2 = np.cos(x[:, 1])
    H11, H12 = 2.35 + 0.16 * c2, 0.10 + 0.08 * c2
    sHs = H11 * s[:, 0] ** 2 + 2 * H12 * s[:, 0] * s[:, 1] + 0.10 * s[:, 1] ** 2
    cols["V"] = 0.5 * sHs + g.c1 * np.einsum("ni,ij,nj->n", xi_tilde, g.P_c, xi_tilde)

    offs = sc.order.offsets
    for i in range(N2):
        cols[f"pe_rho_hat_{i}"] = _pe_track(t, rho_hat[:, offs[i]:offs[i + 1]],
                                            sc.analysis.pe_window, sc.analysis.pe_stride)

    ident = None
    if sc.mode == "freq_id":
        ident = []
        deltas = np.stack(ch.delta, axis=-1)  # (n, n2, q)
        for i in range(N2):
            ri = orders[i]
            ups, ups_dot = assemble_upsilon_hat(dh[:, i], deltas[:, i, :ri])
            nf = sc.order.n_frequencies(i)
            it = identify_trace(t, ups, ups_dot, sc.freq_id.T1, sc.order.has_constant[i], nf,
                                sc.freq_id.stride, sc.freq_id.cond_max, blocks.Phi_i[i])
            ident.append(it)
            for j in range(nf):
                cols[f"omega_hat{i}_{j}"] = it.omega_hat[:, j]
            cols[f"cond_S_{i}"] = it.condition
            cols[f"phi_err_{i}"] = it.phi_error
    return SimTrace(sc, blocks, cols, ident)


def _ref_rows(t, k):
    from .plant import REF_AMPLITUDE, REF_FREQUENCY
    (a1, a2), (w1, w2) = REF_AMPLITUDE, REF_FREQUENCY
    ph = 0.5 * k * np.pi
    return np.stack([a1 * w1 ** k * np.sin(w1 * t + ph), a2 * w2 ** k * np.cos(w2 * t + ph)], axis=1)


# ---------------------------------------------------------------------------
# analysis


@dataclass
class SignalReport:
    final_window_error: float
    fitted_log_slope: float
    settled_at: float = None

    def to_dict(self):
        return asdict(self)


@dataclass
class ConvergenceReport:
    signals: dict
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.signals[name]

    def to_dict(self):
        return {"signals": {k: v.to_dict() for k, v in self.signals.items()}, "extras": self.extras}


def fit_log_slope(t, err, span=(0.2, 0.8), floor=NOISE_FLOOR):
    """Least-squares slope of ``log err`` over the middle of the run, NaN if too few points."""
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    t0, t1 = t[0] + span[0] * (t[-1] - t[0]), t[0] + span[1] * (t[-1] - t[0])
    mask = (t >= t0) & (t <= t1) & (err > floor) & np.isfinite(err)
    if mask.sum() < 3:
        return float("nan")
    return float(np.polyfit(t[mask], np.log(err[mask]), 1)[0])


def settled_time(t, err, tol):
    """First time after which ``err`` stays at or below ``tol``; None if it never settles."""
    bad = np.flatnonzero(~(np.asarray(err) <= tol))
    if bad.size == 0:
        return float(t[0])
    if bad[-1] == len(t) - 1:
        return None
    return float(t[bad[-1] + 1])


def signal_report(t, err, window_fraction=0.1, tol=1e-2):
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    if t.size == 0:
        raise EmptyTrace("no samples to analyze")
    if not 0 < window_fraction < 0.5:
        raise ValueError("window_fraction must lie in (0, 0.5)")
    start = t[-1] - window_fraction * (t[-1] - t[0])
    final = err[t >= start]
    fe = float(np.nanmax(final)) if np.any(np.isfinite(final)) else float("nan")
    return SignalReport(fe, fit_log_slope(t, err), settled_time(t, err, tol))


def error_norms(trace):
    """Per-row infinity norms of every error signal the trace supports."""
    tr = trace
    inf = lambda a: np.max(np.abs(a), axis=1)
    blocks = tr.blocks
    errs = {
        "x2_hat": inf(tr.group("x2_hat") - tr.group("xi2")),
        "d_hat": inf(tr.group("d_hat") - tr.group("d")),
        "d0_hat": inf(tr.group("d0_hat") - tr.group("d")),
        "rho_hat": inf(tr.group("rho_hat") - tr.group("rho")),
        "q": inf(tr.group("e_q")),
        "q_dot": inf(tr.group("e_q_dot")),
        "xi_tilde": inf(tr.group("xi_tilde")),
    }
    # theta is only identifiable on nonzero channels realized at minimal order
    offs = tr.scenario.order.offsets
    cols = [k for i, (ok, ch) in enumerate(zip(blocks.minimal, tr.scenario.disturbance.channels))
            if ok and ch.minimal_order > 0 for k in range(offs[i], offs[i + 1])]
    if cols:
        errs["theta"] = inf(tr.group("theta")[:, cols] - blocks.theta_star[cols])
    k = 1
    while f"delta{k}_0" in tr.columns:
        errs[f"delta{k}"] = inf(tr.group(f"delta{k}") - tr.group(f"d{k}"))
        k += 1
    spec = tr.scenario.disturbance
    for i, chn in enumerate(spec.channels):
        for j, w in enumerate(sorted(chn.frequencies)):
            name = f"omega_hat{i}_{j}"
            if name in tr.columns:
                errs[f"omega{i}_{j}"] = np.abs(tr[name] - w)
    return errs


def analyze(trace, window_fraction=None, tol=1e-2):
    """Summarize convergence of every error signal in ``trace``.

    Parameters
    ----------
    trace : SimTrace
    window_fraction : float, optional
        Trailing fraction of the run used for the final-window error;
        defaults to the scenario's analysis setting.
    tol : float
        Threshold for ``settled_at``.
    """
    if trace.t.size == 0:
        raise EmptyTrace("no samples to analyze")
    wf = trace.scenario.analysis.window_fraction if window_fraction is None else window_fraction
    t = trace.t
    signals = {k: signal_report(t, e, wf, tol) for k, e in error_norms(trace).items()}
    extras = {"theta_star": trace.blocks.theta_star.tolist(),
              "model_orders": list(trace.scenario.order.orders),
              "minimal_order": list(trace.blocks.minimal)}
    sc = trace.scenario
    offs = sc.order.offsets
    rho_hat = trace.group("rho_hat")
    window = sc.analysis.pe_window
    W = int(round(window / sc.step))
    if t.size > W:
        pe = []
        for i in range(N2):
            seg = rho_hat[-(W + 1):, offs[i]:offs[i + 1]]
            pe.append(exo.is_pe_window(seg, sc.step, window, sc.analysis.pe_alpha).pe_metric)
        extras["pe_final_rho_hat"] = pe
        extras["pe_alpha"] = sc.analysis.pe_alpha
    if trace.ident is not None:
        extras["freq_id"] = []
        for it in trace.ident:
            last = max(it.estimates) if it.estimates else None
            est = it.estimates.get(last)
            extras["freq_id"].append({
                "omega_hat": None if est is None else est.omega_hat.tolist(),
                "multiplicities": None if est is None else list(est.multiplicities),
                "constant_removed": None if est is None else bool(est.constant_mode_present),
                "condition": None if est is None else float(est.condition),
                "first_ready": None if not it.ready.any() else float(t[np.argmax(it.ready)]),
            })
    return ConvergenceReport(signals, extras)
