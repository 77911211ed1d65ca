import math

import numpy as np
from numpy.testing import assert_allclose
import pytest

from imdob import plant
from imdob import matkit, sim
from imdob.errors import SingularInertia

from _common import run

GAINS = plant.ControllerGains()


def test_terms_at_zero():
    H, C, g = plant.manipulator_terms([0.0, 0.0], [0.0, 0.0])
    assert_allclose(H, [[2.51, 0.18], [0.18, 0.10]])
    assert_allclose(C, 0.0)
    assert_allclose(g, [40.30, 1.83])


def test_terms_examples():
    H = plant.manipulator_terms([0.0, math.pi / 2], [0.0, 0.0]).H
    assert H[0, 0] == pytest.approx(2.35, abs=1e-12)
    assert H[0, 1] == pytest.approx(0.10, abs=1e-12)
    C = plant.manipulator_terms([0.3, math.pi / 2], [1.0, 2.0]).C
    assert_allclose(C, [[-0.16, -0.24], [0.08, 0.0]], atol=1e-12)
    g = plant.manipulator_terms([math.pi / 2, 0.0], [0.0, 0.0]).g
    assert_allclose(g, [0.0, 0.0], atol=1e-12)


def test_inertia_bounds():
    q2 = np.linspace(0, 2 * np.pi, 721)
    lam = np.array([np.linalg.eigvalsh(plant.manipulator_terms([0.0, a], [0.0, 0.0]).H) for a in q2])
    # closed-form eigenvalue range of [[2.35 + .16c, .1 + .08c], [., .1]] over c in [-1, 1]
    c = np.cos(q2)
    tr = 2.45 + 0.16 * c
    det = (2.35 + 0.16 * c) * 0.1 - (0.1 + 0.08 * c) ** 2
    lo = 0.5 * (tr - np.sqrt(tr ** 2 - 4 * det))
    assert_allclose(lam[:, 0], lo, rtol=1e-10)
    assert lam.min() > 0.05 and lam.max() < 2.6


def test_skew_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q, v = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
        h = 1e-6
        Hdot = (plant.manipulator_terms(q + h * v, v).H - plant.manipulator_terms(q - h * v, v).H) / (2 * h)
        N = Hdot - 2 * plant.manipulator_terms(q, v).C
        assert_allclose(N, -N.T, atol=1e-8)
        x = rng.normal(size=2)
        assert abs(x @ N @ x) < 1e-8


def test_plant_rhs_examples():
    x = np.zeros(8)
    out = plant.plant_rhs(x, [1.0, 2.0], [-1.0, -2.0])
    assert_allclose(out[[0, 1, 4, 5, 6, 7]], 0.0)
    H, _, g = plant.manipulator_terms([0, 0], [0, 0])
    assert_allclose(out[2:4], np.linalg.solve(H, -g))
    st = plant.PlantState(np.array([0.3, -0.2]), np.array([0.5, 0.1]), np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    out = plant.plant_rhs(st, [0.5, 0.5], [0.25, -0.5])
    H, C, g = plant.manipulator_terms(st.q, st.q_dot)
    assert_allclose(out[2:4], np.linalg.solve(H, st.xi1 - C @ st.q_dot - g - st.q))
    assert_allclose(out[4:], [3.0, 4.0, 0.75, 0.0])
    assert_allclose(plant.PlantState.from_vector(st.to_vector()).to_vector(), st.to_vector())


def test_singular_inertia_guard(monkeypatch):
    monkeypatch.setattr(plant, "_COND_MAX", 1.0)
    with pytest.raises(SingularInertia):
        plant.plant_rhs(np.zeros(8), np.zeros(2), np.zeros(2))


def test_reference():
    r = plant.reference(0.0)
    assert_allclose(r.q_d, [0.0, 4.0])
    assert_allclose(plant.reference(50.0).q_d[0], 3.0)
    t, h = 12.3, 1e-3
    for k in range(4):
        hi, lo = plant.reference(t + h)[k], plant.reference(t - h)[k]
        assert_allclose((hi - lo) / (2 * h), plant.reference(t)[k + 1], atol=1e-8)


def test_gain_validation():
    with pytest.raises(ValueError):
        plant.ControllerGains(alpha=0.0)
    with pytest.raises(ValueError):
        plant.ControllerGains(kp1=-1.0)
    with pytest.raises(ValueError):
        plant.ControllerGains(Ks=-np.eye(2))
    assert matkit.is_hurwitz(GAINS.A_c)
    P = GAINS.P_c
    assert_allclose(GAINS.A_c.T @ P + P @ GAINS.A_c, -np.eye(4), atol=1e-12)
    assert GAINS.c1 > 1.5


def _flow(x, t, tau, d, h, n):
    """Plant states at t + k h for k = -n..n under constant torque."""
    f = lambda s, y: plant.plant_rhs(y, tau, d)
    xs = {0: x}
    y = x
    for k in range(1, n + 1):
        y = sim.rk4_step(f, y, t, h)
        xs[k] = y
    # backward in time: the field is autonomous, so integrate its negative
    g = lambda s, y: -f(s, y)
    y = x
    for k in range(1, n + 1):
        y = sim.rk4_step(g, y, t, h)
        xs[-k] = y
    return xs


def test_zeta_are_time_derivatives_of_xi_r():
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.uniform(-1, 1, 8)
        t = rng.uniform(0, 100)
        tau, d = rng.normal(size=2), rng.normal(size=2)
        h = 1e-3
        xs = _flow(x, t, tau, d, h, 2)
        xr = {k: plant.control_step(xs[k], t + k * h, np.zeros(2), GAINS).xi_r for k in xs}
        out = plant.control_step(x, t, np.zeros(2), GAINS)
        # plant torque enters xi2' = tau + d, so zeta2 must use the same input
        d1 = (-xr[2] + 8 * xr[1] - 8 * xr[-1] + xr[-2]) / (12 * h)
        d2 = (-xr[2] + 16 * xr[1] - 30 * xr[0] + 16 * xr[-1] - xr[-2]) / (12 * h * h)
        assert_allclose(out.zeta1, d1, rtol=1e-6, atol=1e-7)
        assert_allclose(out.zeta2, d2, rtol=1e-4, atol=1e-4)


def test_closed_loop_error_dynamics():
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.uniform(-1, 1, 8)
        t = rng.uniform(0, 100)
        d, d_hat = rng.normal(size=2), rng.normal(size=2)
        tau = plant.control_step(x, t, d_hat, GAINS).tau
        h = 1e-4
        f = lambda s, y: plant.plant_rhs(y, tau, d)
        xp = sim.rk4_step(f, x, t, h)
        xm = sim.rk4_step(lambda s, y: -f(s, y), x, t, h)
        ep = plant.control_step(xp, t + h, d_hat, GAINS).xi_tilde
        em = plant.control_step(xm, t - h, d_hat, GAINS).xi_tilde
        e = plant.control_step(x, t, d_hat, GAINS).xi_tilde
        expected = GAINS.A_c @ e + GAINS.B_c @ (d - d_hat)
        assert_allclose((ep - em) / (2 * h), expected, rtol=1e-5, atol=1e-6)


def test_perfect_tracking_is_an_equilibrium_of_the_errors():
    t = 37.0
    r = plant.reference(t)
    x = np.concatenate([r.q_d, r.q_d_dot, np.zeros(4)])
    x[4:6] = plant.control_step(x, t, np.zeros(2), GAINS).xi_r
    x[6:8] = plant.control_step(x, t, np.zeros(2), GAINS).zeta1
    d = np.array([0.3, -0.1])
    out = plant.control_step(x, t, d, GAINS)
    assert_allclose(out.s, 0.0, atol=1e-12)
    assert_allclose(out.xi_tilde, 0.0, atol=1e-12)
    # xi2' = tau + d = zeta2 exactly
    assert_allclose(out.tau + d, out.zeta2, atol=1e-12)


def test_torque_linear_in_disturbance_estimate():
    x = np.random.default_rng(3).uniform(-1, 1, 8)
    a = plant.control_step(x, 5.0, np.zeros(2), GAINS).tau
    b = plant.control_step(x, 5.0, np.array([1.0, -2.0]), GAINS).tau
    assert_allclose(b - a, [-1.0, 2.0], atol=1e-12)


def test_tracking_and_lyapunov_decrease():
    tr, rep = run("example")
    assert rep["q"].final_window_error < 1e-2
    assert rep["q_dot"].final_window_error < 1e-2
    V = tr["V"]
    t = tr.t
    assert V[-1] < V[np.searchsorted(t, t[-1] / 4)]
    k = len(t) // 2
    state = np.concatenate([tr.group(p)[k] for p in ("q", "q_dot", "xi1", "xi2")])
    v = plant.lyapunov_value(state, tr.group("s")[k], tr.group("xi_tilde")[k], tr.scenario.controller)
    assert v == pytest.approx(V[k], rel=1e-10)
