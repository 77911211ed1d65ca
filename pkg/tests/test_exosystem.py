
import numpy as np
from numpy.testing import assert_allclose
import pytest
from hypothesis import assume, given, settings, strategies as st

from imdob import exosystem as exo
from imdob import matkit
from imdob.errors import DuplicateFrequency, WindowTooShort
from imdob.observer import regressor

from _common import EXAMPLE_SPECTRA, example_blocks, example_spec


def test_zeroing_coeffs_examples():
    assert_allclose(exo.zeroing_coeffs([2.0], False), [-4.0, 0.0])
    assert_allclose(exo.zeroing_coeffs([1.0], True), [0.0, -1.0, 0.0])
    assert_allclose(exo.zeroing_coeffs([], True), [0.0])
    # (l^2 + 1)(l^2 + 4) = l^4 + 5 l^2 + 4
    assert_allclose(exo.zeroing_coeffs([1.0, 2.0], False), [-4.0, 0.0, -5.0, 0.0])


def test_zeroing_coeffs_high_frequency_warns():
    with pytest.warns(RuntimeWarning):
        exo.zeroing_coeffs([2e3], False)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0.2, 5.0), min_size=1, max_size=3, unique=True), st.booleans())
def test_companion_spectrum_is_the_frequency_set(freqs, const):
    freqs = sorted(freqs)
    assume(all(b - a >= 0.2 for a, b in zip(freqs, freqs[1:])))
    lam = matkit.eigvals(matkit.companion_bottom_row(exo.zeroing_coeffs(freqs, const)))
    expected = [1j * w for w in freqs] + [-1j * w for w in freqs] + ([0.0] if const else [])
    for e in expected:
        assert np.min(np.abs(lam - e)) <= 1e-8 * max(1.0, abs(e))


def test_channel_validation():
    with pytest.raises(DuplicateFrequency):
        exo.ChannelSpec(0.0, [exo.Mode(1.0, 2.0), exo.Mode(0.5, 2.0)])
    with pytest.raises(ValueError):
        exo.ChannelSpec(0.0, [exo.Mode(1.0, 0.0)])
    with pytest.raises(ValueError):
        exo.ChannelSpec(0.0, [exo.Mode(0.0, 1.0)])
    assert exo.ChannelSpec(1.0, [exo.Mode(1.0, 1.0)]).minimal_order == 3
    assert exo.ChannelSpec(0.0, [exo.Mode(1.0, 1.0)]).minimal_order == 2


def test_model_orders():
    spec = example_spec()
    assert exo.ModelOrder.minimal(spec).orders == (3, 2)
    assert exo.ModelOrder.minimal(spec).has_constant == (True, False)
    d = exo.ModelOrder.default(spec)
    assert d.orders == (3, 3) and d.has_constant == (True, True)
    assert d.r_bar == 6 and list(d.offsets) == [0, 3, 6]
    assert d.n_frequencies(0) == 1 and d.n_frequencies(1) == 1
    with pytest.raises(ValueError):
        exo.build_exo_blocks(spec, exo.ModelOrder((2, 2), (True, False)))


def test_example_blocks():
    b = example_blocks()
    assert_allclose(b.M_i[0][-1], [-6.0, -11.0, -6.0])
    assert_allclose(b.M_i[1], [[0.0, 1.0], [-1.0, -2.0]])
    assert_allclose(b.Phi_i[0][-1], [0.0, -1.0, 0.0])
    assert_allclose(b.Phi_i[1][-1], [-4.0, 0.0])
    assert b.theta_star.shape == (5,)
    for Phi, M, N, G, T, Psi in zip(b.Phi_i, b.M_i, b.N_i, b.Gamma_i, b.T_i, b.Psi_i):
        assert np.linalg.norm(T @ Phi - M @ T - N @ G) <= 1e-12
        assert_allclose(Psi @ T, G, atol=1e-12)
    assert b.minimal == (True, True)


def test_non_hurwitz_spectrum_rejected():
    with pytest.raises(ValueError):
        exo.build_exo_blocks(example_spec(), exo.ModelOrder((3, 2), (True, False)),
                             [[-1.0, -2.0, 0.5], [-1.0, -2.0]])


def test_disturbance_examples():
    spec = example_spec()
    tr = exo.eval_truth(spec, 0.0)
    assert_allclose(tr.d, [1.0 + 0.1 * np.sin(0.1), 0.2 * np.sin(0.2)])
    D = exo.disturbance_derivs(spec, np.array([0.3]), 2)
    assert_allclose(D[1, 0], [0.1 * np.cos(0.4), 0.4 * np.cos(0.8)])
    assert_allclose(D[2, 0], [-0.1 * np.sin(0.4), -0.8 * np.sin(0.8)])
    zero = exo.DisturbanceSpec([exo.ChannelSpec(), exo.ChannelSpec()])
    assert_allclose(exo.eval_truth(zero, np.linspace(0, 10, 11)).d, 0.0)


def test_disturbance_kernel_agrees():
    spec = example_spec()
    arrs = spec.kernel_arrays()
    D = exo.disturbance_derivs(spec, np.array([1.7]), 3)
    for k in range(4):
        assert_allclose(exo._disturbance_kernel(1.7, *arrs, k), D[k, 0], atol=1e-15)


def test_exosystem_flow_and_output():
    b = example_blocks()
    t = np.random.default_rng(0).uniform(0, 200, 100)
    tr = exo.eval_truth(example_spec(), t, k_max=1, blocks=b)
    # output map
    assert_allclose(tr.upsilon @ b.Gamma.T, tr.d, atol=1e-14)
    # reconstruction d = -Psi rho
    assert_allclose(-tr.rho @ b.Psi.T, tr.d, atol=1e-10)
    # central differences of v against Phi v
    h = 1e-4
    up = exo.eval_truth(example_spec(), t + h, blocks=b).upsilon
    dn = exo.eval_truth(example_spec(), t - h, blocks=b).upsilon
    assert_allclose((up - dn) / (2 * h), tr.upsilon @ b.Phi.T, atol=1e-7)
    # rho' = -T v'
    assert_allclose(tr.rho_derivs[1], -(tr.upsilon @ b.Phi.T) @ b.T.T, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
def test_regressor_identity(rho):
    # Psi rho = M(rho) C(Psi) for any rho
    b = example_blocks()
    rho = np.array(rho)
    lhs = b.Psi @ rho
    rhs = regressor(rho, b.order.orders) @ b.theta_star
    assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(rho).max() * np.abs(b.theta_star).max()))


def test_pe_examples():
    dt = 1e-3
    t = np.arange(0, 4 * np.pi, dt)
    res = exo.is_pe_window(np.column_stack([np.sin(t), np.cos(t)]), dt, 2 * np.pi)
    assert res.pe_metric == pytest.approx(np.pi, rel=1e-4)
    assert res.satisfied
    res = exo.is_pe_window(np.zeros((1000, 2)), dt, 0.5)
    assert res.pe_metric == 0.0 and not res.satisfied
    with pytest.raises(WindowTooShort):
        exo.is_pe_window(np.zeros((10, 2)), dt, 1.0)


def test_minimal_state_is_pe_and_lift_is_not():
    dt = 1e-2
    t = np.arange(0, 40, dt)
    spec = exo.DisturbanceSpec([exo.ChannelSpec(0.0, [exo.Mode(1.0, 2.0)])])
    D = exo.disturbance_derivs(spec, t, 3)[..., 0]
    assert exo.is_pe_window(D[:2].T, dt, 10.0).satisfied
    # four derivatives of a single sinusoid span only a plane
    lifted = exo.is_pe_window(D[:4].T, dt, 10.0)
    assert lifted.pe_metric < 1e-6 and not lifted.satisfied


def test_overmodel_block():
    spec = example_spec()
    b = exo.build_exo_blocks(spec, exo.ModelOrder((3, 4), (True, False)),
                             [[-1, -2, -3], [-1, -2, -3, -4]])
    # l^2 (l^2 + 4)
    assert_allclose(b.Phi_i[1][-1], [0.0, 0.0, -4.0, 0.0])
    assert b.minimal == (True, False)
    t = np.linspace(0, 30, 301)
    tr = exo.eval_truth(spec, t, blocks=b)
    assert_allclose(-tr.rho @ b.Psi.T, tr.d, atol=1e-9)
