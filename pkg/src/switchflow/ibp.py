"""Integration-by-parts machinery for derivatives of the transfer operator.

The object that makes everything work is the direction-transfer matrix

    tau_t(x) = -U(Psi_0^t x)^{-1} F_0^t(x),

with U(y) = (u1(y), u0(y)) the drive matrix and F_0^t = D_x Psi_0^t the
inverse-flow Jacobian.  It satisfies the transfer identity

    D_x Psi^(s,t)(x) xi = D_(s,t) Psi^(s,t)(x) tau_t(x) xi,

which converts a spatial derivative of anything composed with Psi^(s,t)
into an (s,t)-derivative.  Integrating that derivative by parts against the
exponential switching density lambda^2 e^{-lambda(s+t)} moves it onto the
density, leaving a formula for grad(Qh) that never differentiates h:

    D_x(Qh)(x) xi = E[(D_x J xi) h(Psi^(S,T) x)]
                  + E[interior(x,S,T,xi)   h(Psi^(S,T) x)]
                  + E_S[boundary_s(x,S,xi) h(Psi_1^S x)]
                  + E_T[boundary_t(x,T,xi) h(Psi_0^T x)]

with, writing J = J_(s,t)(x), w = tau_t(x) xi, and 1 = (1,1):

    interior   = J (lambda (1 . w) - e2 . (d_t tau_t(x)) xi)
                 - (d_s J) w_1 - (d_t J) w_2
    boundary_s = -lambda J(x,s,0) (tau_0(x) xi . e2)
    boundary_t = -lambda J(x,0,t) (tau_t(x) xi . e1)

Derivative conventions follow the module-wide design decision: tau and J
are differentiated in (s,t) by centered differences at step 1e-4, and
D_x J by centered differences of J at step 1e-4 from four shifted base
grids.  One exception, for the grid-wide builder only: d_t J is evaluated
through the exact semigroup identity

    d_t J_(s,t)(x) = -D_x J_(s,t)(x) . u0(x) - div u0(x) J_(s,t)(x)

(obtained from Psi_0^{t+d} = Psi_0^t o Psi_0^d and Jacobian
multiplicativity), which reuses the already-computed D_x J instead of two
more full flow ensembles; the point-wise evaluators keep the plain
finite-difference route and a test pins the two against each other.
"""

import numpy as np

from .fields import drive_matrices, invert_2x2
from .flows import _mat22, integrate, integrate_var_t
from .torus import wrap
from .transfer import DEFAULT_STEP, NODE_CUT, inverse_leg, kept_nodes

__all__ = [
    "tau", "TauResult", "check_transfer_identity", "IbpKernels",
    "build_kernels", "IbpGradient", "ibp_gradient", "ibp_gradient_many",
    "l1_gradient_bound", "fit_polynomial_envelope",
]

FD_ST = 1e-4      # (s,t)-derivative step for tau and J
FD_X = 1e-4       # spatial step for D_x J
FD_MAGIC = 1e-5   # (s,t) step for the transfer-identity check
POINT_STEP = 0.01  # integrator step for point-wise evaluation


class TauResult:
    def __init__(self, matrix, dt):
        self.matrix = matrix
        self.dt = dt


def _tau_batch(u0, u1, y, F0):
    """tau = -U(y)^{-1} F0 for stacked y (..., 2) and F0 (..., 2, 2)."""
    U, det = drive_matrices(u0, u1, wrap(y))
    Uinv = invert_2x2(U, det)
    return -np.einsum("...ij,...jk->...ik", Uinv, F0)


def tau(u0, u1, x, t, h_max=POINT_STEP, fd=FD_ST):
    """tau_t(x) and its centered-difference time derivative."""
    x = np.asarray(x, dtype=float).reshape(1, 2)
    y, F0 = integrate(u0, x, -float(t), h_max=h_max, mode="jac")
    m = _tau_batch(u0, u1, y, F0)[0]
    yp, Sp = integrate(u0, y, -fd, h_max=h_max, mode="jac")
    ym, Sm = integrate(u0, y, fd, h_max=h_max, mode="jac")
    tp = _tau_batch(u0, u1, yp, np.einsum("nij,njk->nik", Sp, F0))[0]
    tm = _tau_batch(u0, u1, ym, np.einsum("nij,njk->nik", Sm, F0))[0]
    return TauResult(matrix=m, dt=(tp - tm) / (2 * fd))


def check_transfer_identity(u0, u1, x, s, t, xi, fd=FD_MAGIC,
                            h_max=POINT_STEP):
    """Residual of the derivative-transfer identity at one (x, s, t, xi).

    Left side from the variational chain Jacobian; right side from centered
    differences of Psi^(s,t) in (s,t) on the universal cover.
    """
    if s < 0 or t < 0:
        raise ValueError("s and t must be nonnegative")
    x = np.asarray(x, dtype=float).reshape(1, 2)
    xi = np.asarray(xi, dtype=float).reshape(2)
    y, F0 = integrate(u0, x, -float(t), h_max=h_max, mode="jac")
    z, F1 = integrate(u1, y, -float(s), h_max=h_max, mode="jac")
    lhs = (F1[0] @ F0[0]) @ xi

    w = _tau_batch(u0, u1, y, F0)[0] @ xi
    zsp, _ = integrate(u1, z, -fd, h_max=h_max)
    zsm, _ = integrate(u1, z, fd, h_max=h_max)
    d_s = (zsp[0] - zsm[0]) / (2 * fd)
    ytp, _ = integrate(u0, y, -fd, h_max=h_max)
    ytm, _ = integrate(u0, y, fd, h_max=h_max)
    ztp, _ = integrate(u1, ytp, -float(s), h_max=h_max)
    ztm, _ = integrate(u1, ytm, -float(s), h_max=h_max)
    d_t = (ztp[0] - ztm[0]) / (2 * fd)
    rhs = d_s * w[0] + d_t * w[1]
    return float(np.linalg.norm(lhs - rhs))


# ---------------------------------------------------------------------------
# Point-wise kernels (G = J), finite differences throughout
# ---------------------------------------------------------------------------

def kernel_samples(u0, u1, lam, x, s, t, xi, h_max=POINT_STEP, fd=FD_ST):
    """Batched kernel evaluation at samples (x_k, s_k, t_k, xi_k).

    Returns a dict with interior/boundary_s/boundary_t values plus the
    ingredients (J, ds_J, dt_J, tau xi components) for diagnostics.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))

    y, F0 = integrate_var_t(u0, x, -t, h_max=h_max, mode="jac")
    det0 = F0[:, 0, 0] * F0[:, 1, 1] - F0[:, 0, 1] * F0[:, 1, 0]
    z, ld1 = integrate_var_t(u1, y, -s, h_max=h_max, mode="logdet")
    J = np.exp(ld1) * det0

    tau_m = _tau_batch(u0, u1, y, F0)
    w = np.einsum("kij,kj->ki", tau_m, xi)
    yp, Sp = integrate(u0, y, -fd, h_max=h_max, mode="jac")
    ym, Sm = integrate(u0, y, fd, h_max=h_max, mode="jac")
    tp = _tau_batch(u0, u1, yp, np.einsum("nij,njl->nil", Sp, F0))
    tm = _tau_batch(u0, u1, ym, np.einsum("nij,njl->nil", Sm, F0))
    dtau_xi = np.einsum("kij,kj->ki", (tp - tm) / (2 * fd), xi)

    # d/ds J via one +-fd chained step from z
    _, lp = integrate(u1, z, -fd, h_max=h_max, mode="logdet")
    _, lm = integrate(u1, z, fd, h_max=h_max, mode="logdet")
    ds_J = (np.exp(ld1 + lp) - np.exp(ld1 + lm)) * det0 / (2 * fd)

    # d/dt J via full re-flows at t +- fd
    dt_J = np.empty_like(J)
    for sign in (1.0, -1.0):
        yd, F0d = integrate_var_t(u0, x, -(t + sign * fd), h_max=h_max,
                                  mode="jac")
        det0d = F0d[:, 0, 0] * F0d[:, 1, 1] - F0d[:, 0, 1] * F0d[:, 1, 0]
        _, ld1d = integrate_var_t(u1, yd, -s, h_max=h_max, mode="logdet")
        if sign > 0:
            dt_J = np.exp(ld1d) * det0d
        else:
            dt_J = (dt_J - np.exp(ld1d) * det0d) / (2 * fd)

    interior = (J * (lam * (w[:, 0] + w[:, 1]) - dtau_xi[:, 1])
                - ds_J * w[:, 0] - dt_J * w[:, 1])

    # boundary kernels live on the axis slices t=0 and s=0
    _, ld1b = integrate_var_t(u1, x, -s, h_max=h_max, mode="logdet")
    U0, detU0 = drive_matrices(u0, u1, wrap(x))
    tau0_xi = np.einsum("kij,kj->ki", -invert_2x2(U0, detU0), xi)
    boundary_s = -lam * np.exp(ld1b) * tau0_xi[:, 1]
    boundary_t = -lam * det0 * w[:, 0]

    return {
        "interior": interior, "boundary_s": boundary_s,
        "boundary_t": boundary_t, "J": J, "ds_J": ds_J, "dt_J": dt_J,
        "tau_xi": w, "dtau_xi": dtau_xi,
    }


class IbpKernels:
    """Kernel triple for G = J with a fixed switching rate."""

    def __init__(self, u0, u1, lam, h_max=POINT_STEP):
        self.u0 = u0
        self.u1 = u1
        self.lam = float(lam)
        self.h_max = h_max

    def _one(self, which, x, s, t, xi):
        out = kernel_samples(self.u0, self.u1, self.lam,
                             np.asarray(x, dtype=float).reshape(1, 2),
                             np.atleast_1d(float(s)), np.atleast_1d(float(t)),
                             np.asarray(xi, dtype=float).reshape(1, 2),
                             h_max=self.h_max)
        return float(out[which][0])

    def interior(self, x, s, t, xi):
        return self._one("interior", x, s, t, xi)

    def boundary_s(self, x, s, xi):
        return self._one("boundary_s", x, s, 0.0, xi)

    def boundary_t(self, x, t, xi):
        return self._one("boundary_t", x, 0.0, t, xi)


def build_kernels(u0, u1, lam):
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return IbpKernels(u0, u1, lam)


def fit_polynomial_envelope(s, t, values):
    """Least-squares growth exponent of |values| against (1 + s + t).

    Returns (exponent, scale) with |v| <= scale * (1 + s + t)^exponent tight
    at the largest sample; a small exponent certifies that a degree-2
    polynomial envelope is more than enough over the sampled range.
    """
    v = np.abs(np.asarray(values, dtype=float))
    base = np.log1p(np.asarray(s, dtype=float) + np.asarray(t, dtype=float))
    good = v > 1e-300
    slope = np.polyfit(base[good], np.log(v[good]), 1)[0]
    scale = float(np.max(v / np.exp(base * max(slope, 0.0))))
    return float(slope), scale


# ---------------------------------------------------------------------------
# Grid-wide gradient of Qh
# ---------------------------------------------------------------------------

_CHUNK = 4_000_000


def _chunked_step_logdet(field, pts_flat, t_step, h_max):
    """Log-determinant of a single +-fd inverse-flow step, chunked for memory."""
    out = np.empty(pts_flat.shape[0])
    for lo in range(0, pts_flat.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, pts_flat.shape[0])
        _, ld = integrate(field, pts_flat[lo:hi], t_step, h_max=h_max,
                          mode="logdet")
        out[lo:hi] = ld
    return out


def _jac_only_field(u0, u1, nodes, X, h_max):
    """J_(s_i,t_j)(X) for a base point set, log-det legs only."""
    m, p = len(nodes), X.shape[0]
    y, ld0 = inverse_leg(u0, X, nodes, h_max, mode="logdet")
    _, ld1 = inverse_leg(u1, y.reshape(m * p, 2), nodes, h_max, mode="logdet")
    return np.exp(ld1.reshape(m, m, p) + ld0[None, :, :])


class IbpGradient:
    """Everything needed to evaluate grad(Qh)(x) . xi over a fixed point set.

    The build is h-independent; `gradient` then costs one interpolation of h
    per point family plus weighted sums, so one build serves every test
    function and both coordinate directions.
    """

    def __init__(self, u0, u1, quad, points, h_max=DEFAULT_STEP,
                 node_cut=NODE_CUT, fd_x=FD_X, fd_st=FD_ST):
        self.u0, self.u1, self.quad = u0, u1, quad
        self.lam = quad.lam
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.h_max = h_max
        self.node_cut = node_cut
        self.fd_x = fd_x
        self.fd_st = fd_st
        self._built = False

    def build(self):
        if self._built:
            return self
        nodes, weights = kept_nodes(self.quad, self.node_cut)
        self.nodes, self.weights = nodes, weights
        X = self.points
        m, p = len(nodes), X.shape[0]
        hm = self.h_max

        # main ensemble: t-leg with full Jacobians (tau needs F_0^t)
        y, F0 = inverse_leg(self.u0, X, nodes, hm, mode="jac")
        det0 = F0[..., 0, 0] * F0[..., 1, 1] - F0[..., 0, 1] * F0[..., 1, 0]
        z, ld1 = inverse_leg(self.u1, y.reshape(m * p, 2), nodes, hm,
                             mode="logdet")
        z = z.reshape(m, m, p, 2)
        ld1 = ld1.reshape(m, m, p)
        self.jac = np.exp(ld1 + np.log(det0)[None])
        self.y = y
        self.det0 = det0
        self.z_pts = z

        # tau and its time derivative at every t-node
        self.tau = _tau_batch(self.u0, self.u1, y, F0)
        yf = y.reshape(m * p, 2)
        F0f = F0.reshape(m * p, 2, 2)
        dtau = None
        for sign in (1.0, -1.0):
            yd, S = integrate(self.u0, yf, -sign * self.fd_st, h_max=hm,
                              mode="jac")
            F0d = np.empty_like(F0f)
            _mat22(S, F0f, F0d)
            td = _tau_batch(self.u0, self.u1, yd, F0d)
            dtau = td if dtau is None else (dtau - td) / (2 * self.fd_st)
        self.dtau = dtau.reshape(m, p, 2, 2)

        # d/ds J via one chained +-fd step from every z
        zf = z.reshape(-1, 2)
        lp = _chunked_step_logdet(self.u1, zf, -self.fd_st, hm)
        lm = _chunked_step_logdet(self.u1, zf, self.fd_st, hm)
        self.ds_jac = (np.exp(ld1 + lp.reshape(m, m, p))
                       - np.exp(ld1 + lm.reshape(m, m, p))) \
            * det0[None] / (2 * self.fd_st)

        # D_x J by centered differences from four shifted base grids
        self.dx_jac = np.empty((2, m, m, p))
        for k in range(2):
            e = np.zeros(2)
            e[k] = self.fd_x
            jp = _jac_only_field(self.u0, self.u1, nodes, X + e, hm)
            jm = _jac_only_field(self.u0, self.u1, nodes, X - e, hm)
            self.dx_jac[k] = (jp - jm) / (2 * self.fd_x)

        # d/dt J via the semigroup identity (see module docstring)
        u0x = self.u0.value(X)
        div0 = self.u0.divergence(X)
        self.dt_jac = -(self.dx_jac[0] * u0x[:, 0] + self.dx_jac[1] * u0x[:, 1]) \
            - div0[None, None, :] * self.jac

        # boundary leg under u1 from the base points
        z1, ld1b = inverse_leg(self.u1, X, nodes, hm, mode="logdet")
        self.z1 = z1
        self.det1b = np.exp(ld1b)

        # tau_0 = -U(x)^{-1}
        U, detU = drive_matrices(self.u0, self.u1, wrap(X))
        self.tau0 = -invert_2x2(U, detU)
        self._built = True
        return self

    def gradient(self, h):
        """(P, 2) array of  grad(Qh)(x_p)  in the coordinate directions."""
        self.build()
        n = h.n
        vals_z = h.interpolate_indexed(self.z_pts * n - 0.5)
        vals_y = h.interpolate_indexed(self.y * n - 0.5)
        vals_z1 = h.interpolate_indexed(self.z1 * n - 0.5)
        w = self.weights
        w2 = np.multiply.outer(w, w)
        out = np.empty((self.points.shape[0], 2))
        for k in range(2):
            txi = self.tau[..., :, k]                   # (m, p, 2)
            dtau_xi2 = self.dtau[..., 1, k]             # (m, p)
            interior = (self.jac * (self.lam * (txi[..., 0] + txi[..., 1])
                                    - dtau_xi2)[None]
                        - self.ds_jac * txi[None, ..., 0]
                        - self.dt_jac * txi[None, ..., 1])
            a = (self.dx_jac[k] + interior) * vals_z
            term0 = np.einsum("ij,ijp->p", w2, a)
            b1 = -self.lam * self.det1b * self.tau0[:, 1, k]
            term1 = np.einsum("i,ip->p", w, b1 * vals_z1)
            b2 = -self.lam * self.det0 * txi[..., 0]
            term2 = np.einsum("j,jp->p", w, b2 * vals_y)
            out[:, k] = term0 + term1 + term2
        return out

    def gradient_xi(self, h, xi):
        g = self.gradient(h)
        return g @ np.asarray(xi, dtype=float)


def ibp_gradient_many(h, u0, u1, quad, xs, xis, **kw):
    """grad(Qh)(x_k) . xi_k at arbitrary points, one shared build."""
    ib = IbpGradient(u0, u1, quad, xs, **kw)
    g = ib.gradient(h)
    return np.einsum("kj,kj->k", g, np.atleast_2d(np.asarray(xis, dtype=float)))


def ibp_gradient(h, u0, u1, quad, x, xi, **kw):
    """Directional derivative of Qh at a single point, no derivative of h."""
    return float(ibp_gradient_many(
        h, u0, u1, quad, np.asarray(x, dtype=float).reshape(1, 2),
        np.asarray(xi, dtype=float).reshape(1, 2), **kw)[0])


def l1_gradient_bound(h, u0, u1, quad, ibp=None, **kw):
    """(||grad Qh||_L1, K_hat) with the 4-direction sup surrogate.

    The cellwise sup over unit directions is approximated by
    max(|d1|, |d2|, |d1 + d2|/sqrt2, |d1 - d2|/sqrt2).
    """
    if ibp is None:
        g = (np.arange(h.n) + 0.5) / h.n
        pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        ibp = IbpGradient(u0, u1, quad, pts, **kw)
    grad = ibp.gradient(h)
    g1, g2 = grad[:, 0], grad[:, 1]
    sup = np.maximum.reduce([np.abs(g1), np.abs(g2),
                             np.abs(g1 + g2) / np.sqrt(2.0),
                             np.abs(g1 - g2) / np.sqrt(2.0)])
    norm = float(sup.mean())
    return norm, norm / h.l1_norm()
