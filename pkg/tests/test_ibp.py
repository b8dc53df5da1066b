import numpy as np
import pytest

import switchflow as sf
from switchflow.grid import DensityGrid
from switchflow.ibp import (IbpGradient, build_kernels, check_transfer_identity,
                            fit_polynomial_envelope, ibp_gradient,
                            ibp_gradient_many, kernel_samples,
                            l1_gradient_bound, tau)

from conftest import sin_mode_truth


# ---------------------------------------------------------------------------
# tau and the transfer identity
# ---------------------------------------------------------------------------

def test_tau_zero_time_is_minus_U_inverse(conjugated_pair):
    u0, u1 = conjugated_pair
    x = np.array([0.3, 0.6])
    res = tau(u0, u1, x, 0.0)
    dm = sf.eval_drive_matrix(u0, u1, x)
    assert np.allclose(res.matrix, -dm.inverse, atol=1e-12)


def test_tau_constant_pair_time_independent(constant_pair, rng):
    u0, u1 = constant_pair
    dm = sf.eval_drive_matrix(u0, u1, [0.5, 0.5])
    for _ in range(5):
        res = tau(u0, u1, rng.random(2), rng.random() * 3)
        assert np.allclose(res.matrix, -dm.inverse, atol=1e-10)
        assert np.abs(res.dt).max() < 1e-8


def test_tau_linearity(conjugated_pair, rng):
    u0, u1 = conjugated_pair
    m = tau(u0, u1, rng.random(2), 1.3).matrix
    xi, eta = rng.random(2), rng.random(2)
    a, b = 0.7, -1.9
    assert np.allclose(m @ (a * xi + b * eta), a * (m @ xi) + b * (m @ eta),
                       atol=1e-12)


def test_transfer_identity_constant_pair(constant_pair, rng):
    u0, u1 = constant_pair
    for _ in range(10):
        r = check_transfer_identity(u0, u1, rng.random(2),
                                    rng.random() * 3, rng.random() * 3,
                                    rng.random(2))
        assert r < 1e-9


def test_transfer_identity_zero_times(conjugated_pair):
    u0, u1 = conjugated_pair
    r = check_transfer_identity(u0, u1, [0.2, 0.8], 0.0, 0.0, [1.0, 0.0])
    assert r < 1e-9


def test_transfer_identity_conjugated(conjugated_pair, rng):
    u0, u1 = conjugated_pair
    worst = 0.0
    for _ in range(100):
        ang = rng.random() * 2 * np.pi
        worst = max(worst, check_transfer_identity(
            u0, u1, rng.random(2), rng.random() * 3, rng.random() * 3,
            [np.cos(ang), np.sin(ang)]))
    assert worst < 1e-5


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_kernels_constant_pair_reduction(constant_pair, rng):
    """J = 1, dtau = 0, DJ = 0: interior = lambda(1 . tau xi), boundaries
    equal -lambda (tau xi . e_k)."""
    u0, u1 = constant_pair
    lam = 1.0
    k = build_kernels(u0, u1, lam)
    w_mat = -sf.eval_drive_matrix(u0, u1, [0.0, 0.0]).inverse
    for _ in range(5):
        x = rng.random(2)
        xi = rng.random(2)
        s, t = rng.random(2) * 4
        wxi = w_mat @ xi
        assert k.interior(x, s, t, xi) == pytest.approx(
            lam * (wxi[0] + wxi[1]), abs=1e-8)
        assert k.boundary_s(x, s, xi) == pytest.approx(-lam * wxi[1], abs=1e-8)
        assert k.boundary_t(x, t, xi) == pytest.approx(-lam * wxi[0], abs=1e-8)


def test_kernels_linear_in_xi(conjugated_pair, rng):
    u0, u1 = conjugated_pair
    k = build_kernels(u0, u1, 1.0)
    x, (s, t) = rng.random(2), rng.random(2) * 3
    xi, eta = rng.random(2), rng.random(2)
    a, b = 1.3, -0.8
    for f in (lambda v: k.interior(x, s, t, v),
              lambda v: k.boundary_s(x, s, v),
              lambda v: k.boundary_t(x, t, v)):
        assert f(a * xi + b * eta) == pytest.approx(a * f(xi) + b * f(eta),
                                                    abs=1e-10)


def test_kernels_vanish_at_zero_xi(conjugated_pair):
    u0, u1 = conjugated_pair
    k = build_kernels(u0, u1, 1.0)
    assert k.interior([0.1, 0.1], 1.0, 2.0, [0.0, 0.0]) == 0.0
    assert k.boundary_s([0.1, 0.1], 1.0, [0.0, 0.0]) == 0.0


def test_kernel_polynomial_envelope(conjugated_pair, rng):
    """Numerical surrogate of polynomial boundedness: fitted growth exponent
    of |interior| over s, t in [0, 20] stays at most 2 (here ~0, since the
    conjugated flows keep J and tau bounded)."""
    u0, u1 = conjugated_pair
    K = 120
    x = rng.random((K, 2))
    s = rng.random(K) * 20
    t = rng.random(K) * 20
    ang = rng.random(K) * 2 * np.pi
    xi = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    out = kernel_samples(u0, u1, 1.0, x, s, t, xi)
    for name in ("interior", "boundary_s", "boundary_t"):
        exponent, scale = fit_polynomial_envelope(s, t, out[name])
        assert exponent <= 2.0
        assert np.all(np.abs(out[name])
                      <= scale * (1 + s + t) ** max(exponent, 0.0) + 1e-12)


def test_grid_dtj_identity_matches_pointwise_fd(conjugated_pair,
                                                panel_quad_coarse, rng):
    """The grid builder's semigroup identity for d/dt J against the plain
    finite-difference evaluation used by the point-wise kernels."""
    u0, u1 = conjugated_pair
    pts = rng.random((4, 2))
    ib = IbpGradient(u0, u1, panel_quad_coarse, pts).build()
    i_s, i_t = 3, 5
    s_val = np.full(4, ib.nodes[i_s])
    t_val = np.full(4, ib.nodes[i_t])
    xi = np.tile([1.0, 0.0], (4, 1))
    ks = kernel_samples(u0, u1, 1.0, pts, s_val, t_val, xi,
                        h_max=ib.h_max)
    assert np.allclose(ib.dt_jac[i_s, i_t], ks["dt_J"], rtol=1e-4, atol=1e-6)
    assert np.allclose(ib.ds_jac[i_s, i_t], ks["ds_J"], rtol=1e-4, atol=1e-6)
    assert np.allclose(ib.jac[i_s, i_t], ks["J"], rtol=1e-9)


# ---------------------------------------------------------------------------
# the gradient formula
# ---------------------------------------------------------------------------

def test_ibp_gradient_of_constant_h(constant_pair, panel_quad, rng):
    """Kernel cancellation: grad Q1 = 0 for the constant pair."""
    u0, u1 = constant_pair
    one = DensityGrid.uniform(16)
    v = ibp_gradient(one, u0, u1, panel_quad, rng.random(2), [0.6, -0.8])
    assert abs(v) < 1e-8


def test_ibp_gradient_closed_form(constant_pair, panel_quad, rng):
    """Against the analytic derivative of the characteristic-function form."""
    u0, u1 = constant_pair
    n = 64
    h = DensityGrid.from_function(lambda x, y: 1 + np.sin(2 * np.pi * x), n)
    _, c = sin_mode_truth(u0, u1, 1.0, n)
    xs = rng.random((20, 2))
    xis = np.tile([1.0, 0.0], (20, 1))
    got = ibp_gradient_many(h, u0, u1, panel_quad, xs, xis)
    truth = 2 * np.pi * np.real(c * np.exp(2j * np.pi * xs[:, 0]))
    assert np.max(np.abs(got - truth)) < 1e-5


def test_ibp_gradient_linearity(constant_pair, panel_quad, rng):
    u0, u1 = constant_pair
    n = 16
    h1 = DensityGrid(rng.random((n, n)))
    h2 = DensityGrid(rng.random((n, n)))
    x = rng.random(2)
    ib = IbpGradient(u0, u1, panel_quad, x.reshape(1, 2))
    a, b = 0.6, -1.1
    mix = DensityGrid(a * h1.values + b * h2.values)
    lhs = ib.gradient(mix)
    rhs = a * ib.gradient(h1) + b * ib.gradient(h2)
    assert np.allclose(lhs, rhs, atol=1e-10)
    xi = rng.random(2)
    gx = ib.gradient(h1)[0]
    assert ib.gradient_xi(h1, xi)[0] == pytest.approx(gx @ xi, abs=1e-12)


@pytest.fixture(scope="module")
def conj_ibp_setup(conjugated_pair, panel_quad):
    """Conjugated-pair operator plus an IBP build at 60 random points.

    These comparisons are against exact integrals through the FD of Qh, so
    they need the oscillation-accurate rule, not the coarse test rule.
    """
    from switchflow.transfer import TransferOperator
    u0, u1 = conjugated_pair
    n = 24
    op = TransferOperator(u0, u1, panel_quad, n).build()
    pts = np.random.default_rng(3).random((60, 2))
    ib = IbpGradient(u0, u1, panel_quad, pts)
    return op, ib, pts


def _spline_fd(qh, pts, d=1e-3):
    return np.stack([
        (qh.interpolate(pts + [d, 0]) - qh.interpolate(pts - [d, 0])) / (2 * d),
        (qh.interpolate(pts + [0, d]) - qh.interpolate(pts - [0, d])) / (2 * d),
    ], axis=-1)


def test_ibp_matches_fd_smooth_conjugated(conj_ibp_setup):
    """C1 test function: IBP gradient vs fine-step FD of the spline of Qh,
    relative L2 over sampled points below 1e-3."""
    op, ib, pts = conj_ibp_setup
    h = DensityGrid.from_function(
        lambda x, y: 1 + 0.3 * np.sin(2 * np.pi * x) + 0.2 * np.cos(2 * np.pi * y),
        op.n)
    grad = ib.gradient(h)
    fd = _spline_fd(op.apply(h), pts)
    rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
    assert rel < 1e-3


def test_ibp_rough_h_finite_and_matches_fd(conj_ibp_setup):
    """Indicator data: the IBP value is finite and tracks FD of Qh."""
    op, ib, pts = conj_ibp_setup
    h = DensityGrid.indicator_halfplane(op.n)
    grad = ib.gradient(h)
    assert np.all(np.isfinite(grad))
    fd = _spline_fd(op.apply(h), pts)
    rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
    assert rel < 1e-2


def test_l1_bound_uniform_h(constant_pair, panel_quad):
    u0, u1 = constant_pair
    norm, _ = l1_gradient_bound(DensityGrid.uniform(12), u0, u1, panel_quad)
    assert norm < 1e-6


def test_l1_bound_scaling(constant_pair, panel_quad, rng):
    u0, u1 = constant_pair
    n = 12
    h = DensityGrid(1.0 + rng.random((n, n)))
    g = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    ib = IbpGradient(u0, u1, panel_quad, pts)
    n1, k1 = l1_gradient_bound(h, u0, u1, panel_quad, ibp=ib)
    n2, k2 = l1_gradient_bound(DensityGrid(2 * h.values), u0, u1, panel_quad,
                               ibp=ib)
    assert n2 == pytest.approx(2 * n1, rel=1e-12)
    assert k2 == pytest.approx(k1, rel=1e-10)
