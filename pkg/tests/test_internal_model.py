from types import SimpleNamespace

import numpy as np
from numpy.testing import assert_allclose
import pytest

from imdob import internal_model as im
from imdob import exosystem as exo
from imdob import matkit, sim
from imdob.errors import DimensionMismatch

from _common import run, example_blocks, example_spec


def test_im_rhs_examples():
    b = example_blocks()
    eta, x2, f2 = np.zeros(5), np.zeros(2), np.zeros(2)
    assert_allclose(im.im_rhs(b, eta, x2, f2), 0.0)
    # N = 0 reduces to M eta
    blk = SimpleNamespace(M=-np.eye(2), N=np.zeros((2, 1)))
    assert_allclose(im.im_rhs(blk, np.array([1.0, 2.0]), np.array([3.0]), np.array([4.0])), [-1.0, -2.0])


def test_im_rhs_matches_matrix_form():
    b = example_blocks()
    rng = np.random.default_rng(0)
    for _ in range(20):
        eta, x2, f2 = rng.normal(size=5), rng.normal(size=2), rng.normal(size=2)
        expected = b.M @ eta + b.N @ f2 - b.M @ b.N @ x2
        assert_allclose(im.im_rhs(b, eta, x2, f2), expected, atol=1e-13)
        out = np.zeros(5)
        rho = im._im_kernel(b.M, b.N, eta, x2, f2, out)
        assert_allclose(out, expected, atol=1e-13)
        assert_allclose(rho, im.rho_hat(b, eta, x2), atol=1e-15)


def test_rho_hat_and_d0_hat():
    b = example_blocks()
    x2 = np.array([0.3, -0.7])
    assert_allclose(im.rho_hat(b, b.N @ x2, x2), 0.0)
    tr = exo.eval_truth(example_spec(), np.linspace(0, 50, 40), blocks=b)
    assert_allclose(im.d0_hat(tr.rho, b.Psi), tr.d, atol=1e-10)


def test_shape_errors():
    b = example_blocks()
    with pytest.raises(DimensionMismatch):
        im.im_rhs(b, np.zeros(4), np.zeros(2), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        im.rho_hat(b, np.zeros(5), np.zeros(3))


def test_error_is_autonomous():
    # rho_hat - rho follows exp(M t) from its initial value whatever the plant does
    tr, _ = run("example_short")
    b = tr.blocks
    e = tr.group("rho_hat") - tr.group("rho")
    t = tr.t
    for k in range(0, t.size, 97):
        expected = matkit.expm(b.M * t[k]) @ e[0]
        assert np.linalg.norm(e[k] - expected) <= 1e-6 + 5 * tr.scenario.step ** 4 * t[k]


def test_error_decays_at_the_rate_of_M():
    tr, rep = run("example_short")
    slope = rep["rho_hat"].fitted_log_slope
    rate = matkit.eigvals(tr.blocks.M).real.max()
    assert slope <= rate + 0.1


def test_classical_variant_does_not_converge():
    # the model driven by the physical input only misses the dynamics coupling
    tr, rep = run("example_classical")
    assert rep["rho_hat"].final_window_error > 0.1
    assert tr.scenario.im_variant == "classical"
