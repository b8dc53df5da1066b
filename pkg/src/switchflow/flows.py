"""Flow maps, inverse flows, and their Jacobians.

Integration is classical fixed-step RK4.  For a requested time t the step is
h = t / ceil(|t| / h_max), so the nominal step h_max is never exceeded and t
is hit exactly; this keeps results bit-reproducible across platforms, which
matters more here than adaptive stepping (the fields are smooth and gentle).

The first-order Jacobian D_x Phi^t is propagated jointly with the position
through the variational equation D' = Du(x(t)) D, D(0) = I.  A cheaper
"logdet" mode propagates log det D instead, using d/dt log det D = div u(x);
the batched transfer-operator builds use it where full matrices are not
needed.

Positions are integrated on the universal cover (the fields are 1-periodic),
and reduced mod 1 only in returned endpoints -- never inside a Jacobian
computation, so mod-1 wrapping cannot corrupt derivative continuity.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationFailure
from .fields import ConjugatedField
from .torus import wrap

__all__ = [
    "STEP", "HORIZON", "FlowResult", "flow", "inverse_flow",
    "ComposedInverse", "composed_inverse", "JacobianScan",
    "jacobian_bounds_scan", "integrate", "integrate_var_t",
]

STEP = 1e-2
HORIZON = 200.0


def _n_steps(t, h_max):
    return max(1, int(np.ceil(abs(t) / h_max - 1e-12)))


def _check_finite(x, field, t):
    if not np.all(np.isfinite(x)):
        raise IntegrationFailure(
            f"non-finite state integrating {field.kind} field over t={t}",
            context={"t": t, "kind": field.kind})


def _mat22(a, b, out):
    """out = a @ b for stacks of 2x2 matrices, written componentwise."""
    out[:, 0, 0] = a[:, 0, 0] * b[:, 0, 0] + a[:, 0, 1] * b[:, 1, 0]
    out[:, 0, 1] = a[:, 0, 0] * b[:, 0, 1] + a[:, 0, 1] * b[:, 1, 1]
    out[:, 1, 0] = a[:, 1, 0] * b[:, 0, 0] + a[:, 1, 1] * b[:, 1, 0]
    out[:, 1, 1] = a[:, 1, 0] * b[:, 0, 1] + a[:, 1, 1] * b[:, 1, 1]


def integrate(field, x0, t, h_max=STEP, mode="x"):
    """Batched flow of `field` over a common signed time t.

    Parameters
    ----------
    x0 : (N, 2) start points (universal-cover coordinates are fine).
    t : scalar time, may be negative (inverse flow).
    mode : "x" for positions only, "logdet" to co-propagate log det D_x flow,
        "jac" for the full 2x2 variational Jacobian.

    Returns (x, extra) with x the unwrapped endpoints and extra None,
    the (N,) log-determinants, or the (N, 2, 2) Jacobians.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    x = x0.copy()
    if t == 0.0:
        if mode == "x":
            return x, None
        if mode == "logdet":
            return x, np.zeros(n)
        return x, np.tile(np.eye(2), (n, 1, 1))

    steps = _n_steps(t, h_max)
    h = t / steps
    s = field.make_scratch(n)
    xt = np.empty_like(x)
    u = [np.empty_like(x) for _ in range(4)]

    if mode == "x":
        for _ in range(steps):
            field.rhs(x, u[0], s)
            np.multiply(u[0], 0.5 * h, out=xt); xt += x
            field.rhs(xt, u[1], s)
            np.multiply(u[1], 0.5 * h, out=xt); xt += x
            field.rhs(xt, u[2], s)
            np.multiply(u[2], h, out=xt); xt += x
            field.rhs(xt, u[3], s)
            u[1] += u[2]; u[1] *= 2.0; u[0] += u[3]; u[0] += u[1]
            u[0] *= h / 6.0
            x += u[0]
        _check_finite(x, field, t)
        return x, None

    if mode == "logdet":
        l = np.zeros(n)
        d = [np.empty(n) for _ in range(4)]
        for _ in range(steps):
            field.rhs_div(x, u[0], d[0], s)
            np.multiply(u[0], 0.5 * h, out=xt); xt += x
            field.rhs_div(xt, u[1], d[1], s)
            np.multiply(u[1], 0.5 * h, out=xt); xt += x
            field.rhs_div(xt, u[2], d[2], s)
            np.multiply(u[2], h, out=xt); xt += x
            field.rhs_div(xt, u[3], d[3], s)
            u[1] += u[2]; u[1] *= 2.0; u[0] += u[3]; u[0] += u[1]
            u[0] *= h / 6.0
            x += u[0]
            d[1] += d[2]; d[1] *= 2.0; d[0] += d[3]; d[0] += d[1]
            d[0] *= h / 6.0
            l += d[0]
        _check_finite(x, field, t)
        _check_finite(l, field, t)
        return x, l

    if mode == "jac":
        D = np.tile(np.eye(2), (n, 1, 1))
        A = np.empty((n, 2, 2))
        K = [np.empty((n, 2, 2)) for _ in range(4)]
        Dt = np.empty((n, 2, 2))
        for _ in range(steps):
            field.rhs_jac(x, u[0], A, s)
            _mat22(A, D, K[0])
            np.multiply(u[0], 0.5 * h, out=xt); xt += x
            np.multiply(K[0], 0.5 * h, out=Dt); Dt += D
            field.rhs_jac(xt, u[1], A, s)
            _mat22(A, Dt, K[1])
            np.multiply(u[1], 0.5 * h, out=xt); xt += x
            np.multiply(K[1], 0.5 * h, out=Dt); Dt += D
            field.rhs_jac(xt, u[2], A, s)
            _mat22(A, Dt, K[2])
            np.multiply(u[2], h, out=xt); xt += x
            np.multiply(K[2], h, out=Dt); Dt += D
            field.rhs_jac(xt, u[3], A, s)
            _mat22(A, Dt, K[3])
            u[1] += u[2]; u[1] *= 2.0; u[0] += u[3]; u[0] += u[1]
            u[0] *= h / 6.0
            x += u[0]
            K[1] += K[2]; K[1] *= 2.0; K[0] += K[3]; K[0] += K[1]
            K[0] *= h / 6.0
            D += K[0]
        _check_finite(x, field, t)
        _check_finite(D, field, t)
        return x, D

    raise ValueError(f"unknown mode {mode!r}")


def integrate_var_t(field, x0, t, h_max=STEP, mode="x"):
    """Batched flow with a separate signed time per element.

    Element i advances by t[i] using step t[i]/ceil(|t[i]|/h_max); elements
    are frozen once their own step budget is exhausted.  Supports modes "x",
    "logdet", and "jac".
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    t = np.asarray(t, dtype=float)
    n = x0.shape[0]
    x = x0.copy()
    steps = np.maximum(1, np.ceil(np.abs(t) / h_max - 1e-12).astype(int))
    steps[t == 0.0] = 0
    h_all = np.where(steps > 0, t / np.maximum(steps, 1), 0.0)
    if mode == "logdet":
        l = np.zeros(n)
    elif mode == "jac":
        l = np.tile(np.eye(2), (n, 1, 1))
    else:
        l = None
    if steps.max() == 0:
        return x, l

    s = field.make_scratch(n)
    xt = np.empty_like(x)
    u = [np.empty_like(x) for _ in range(4)]
    d = [np.empty(n) for _ in range(4)] if mode == "logdet" else None
    if mode == "jac":
        A = np.empty((n, 2, 2))
        K = [np.empty((n, 2, 2)) for _ in range(4)]
        Dt = np.empty((n, 2, 2))

    for k in range(int(steps.max())):
        h = np.where(k < steps, h_all, 0.0)
        hc = h[:, None]
        if mode == "x":
            field.rhs(x, u[0], s)
            np.multiply(u[0], 0.5 * hc, out=xt); xt += x
            field.rhs(xt, u[1], s)
            np.multiply(u[1], 0.5 * hc, out=xt); xt += x
            field.rhs(xt, u[2], s)
            np.multiply(u[2], hc, out=xt); xt += x
            field.rhs(xt, u[3], s)
        elif mode == "logdet":
            field.rhs_div(x, u[0], d[0], s)
            np.multiply(u[0], 0.5 * hc, out=xt); xt += x
            field.rhs_div(xt, u[1], d[1], s)
            np.multiply(u[1], 0.5 * hc, out=xt); xt += x
            field.rhs_div(xt, u[2], d[2], s)
            np.multiply(u[2], hc, out=xt); xt += x
            field.rhs_div(xt, u[3], d[3], s)
            d[1] += d[2]; d[1] *= 2.0; d[0] += d[3]; d[0] += d[1]
            d[0] *= h / 6.0
            l += d[0]
        else:
            hj = h[:, None, None]
            field.rhs_jac(x, u[0], A, s)
            _mat22(A, l, K[0])
            np.multiply(u[0], 0.5 * hc, out=xt); xt += x
            np.multiply(K[0], 0.5 * hj, out=Dt); Dt += l
            field.rhs_jac(xt, u[1], A, s)
            _mat22(A, Dt, K[1])
            np.multiply(u[1], 0.5 * hc, out=xt); xt += x
            np.multiply(K[1], 0.5 * hj, out=Dt); Dt += l
            field.rhs_jac(xt, u[2], A, s)
            _mat22(A, Dt, K[2])
            np.multiply(u[2], hc, out=xt); xt += x
            np.multiply(K[2], hj, out=Dt); Dt += l
            field.rhs_jac(xt, u[3], A, s)
            _mat22(A, Dt, K[3])
            K[1] += K[2]; K[1] *= 2.0; K[0] += K[3]; K[0] += K[1]
            K[0] *= hj / 6.0
            l += K[0]
        u[1] += u[2]; u[1] *= 2.0; u[0] += u[3]; u[0] += u[1]
        u[0] *= hc / 6.0
        x += u[0]
    _check_finite(x, field, float(np.max(np.abs(t))) if t.size else 0.0)
    return x, l


# ---------------------------------------------------------------------------
# Public single-point operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowResult:
    endpoint: np.ndarray      # wrapped into [0,1)^2
    jacobian: np.ndarray      # variational 2x2, det > 0
    elapsed: float


def flow(field, x, t, h_max=STEP, horizon=HORIZON):
    """Flow map Phi^t(x) plus its variational Jacobian."""
    if abs(t) > horizon:
        raise ValueError(f"|t|={abs(t)} exceeds horizon {horizon}")
    x = np.asarray(x, dtype=float).reshape(1, 2)
    y, D = integrate(field, x, float(t), h_max=h_max, mode="jac")
    return FlowResult(endpoint=wrap(y[0]), jacobian=D[0], elapsed=float(t))


def inverse_flow(field, x, t, h_max=STEP, horizon=HORIZON):
    """Psi^t(x) = Phi^{-t}(x), with Jacobian F^t(x) = D_x Psi^t(x)."""
    res = flow(field, x, -float(t), h_max=h_max, horizon=horizon)
    return FlowResult(endpoint=res.endpoint, jacobian=res.jacobian,
                      elapsed=float(t))


@dataclass(frozen=True)
class ComposedInverse:
    point: np.ndarray          # Psi_1^s(Psi_0^t(x)), wrapped
    chain_jacobian: np.ndarray  # F_1^s(Psi_0^t x) @ F_0^t(x)
    scalar_jacobian: float      # det of the above, positive


def composed_inverse(u0, u1, x, s, t, h_max=STEP):
    """Two-switch inverse map  Psi^(s,t) = Psi_1^s o Psi_0^t  and its Jacobian."""
    if s < 0 or t < 0:
        raise ValueError("s and t must be nonnegative")
    x = np.asarray(x, dtype=float).reshape(1, 2)
    y, F0 = integrate(u0, x, -float(t), h_max=h_max, mode="jac")
    z, F1 = integrate(u1, y, -float(s), h_max=h_max, mode="jac")
    chain = F1[0] @ F0[0]
    det = float(np.linalg.det(chain))
    return ComposedInverse(point=wrap(z[0]), chain_jacobian=chain,
                           scalar_jacobian=det)


@dataclass(frozen=True)
class JacobianScan:
    times: np.ndarray            # 1, 2, ..., t_max
    det_min: np.ndarray          # min over grid of det D_x Phi^t, per t
    det_max: np.ndarray
    max_partial: np.ndarray      # max over grid of |entries of D_x Phi^t|
    growth_exponent: float       # slope of log max_partial vs log(1+t)

    def table(self):
        return np.column_stack([self.times, self.max_partial])


def jacobian_bounds_scan(field, t_max, grid_resolution=16, h_max=STEP):
    """Scan det D_x Phi^t and first-partial growth over t = 1..t_max.

    Requires a conjugated-kind field: those satisfy the no-periodic-orbit /
    smooth-invariant-density condition by construction, which is what keeps
    determinants inside a fixed bracket.  Determinant extremes are reported
    per integer time; the growth exponent is a log-log least-squares fit of
    the largest Jacobian entry against (1 + t).
    """
    if not isinstance(field, ConjugatedField):
        raise TypeError("jacobian_bounds_scan expects a conjugated-kind field")
    g = (np.arange(grid_resolution) + 0.5) / grid_resolution
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    times = np.arange(1, int(t_max) + 1, dtype=float)
    x = pts.copy()
    D = np.tile(np.eye(2), (len(pts), 1, 1))
    det_min = np.empty(len(times))
    det_max = np.empty(len(times))
    max_partial = np.empty(len(times))
    for i in range(len(times)):
        x, Dstep = integrate(field, x, 1.0, h_max=h_max, mode="jac")
        Dnew = np.empty_like(D)
        _mat22(Dstep, D, Dnew)
        D = Dnew
        dets = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
        det_min[i] = dets.min()
        det_max[i] = dets.max()
        max_partial[i] = np.abs(D).max()
    slope = np.polyfit(np.log1p(times), np.log(max_partial), 1)[0]
    return JacobianScan(times=times, det_min=det_min, det_max=det_max,
                        max_partial=max_partial, growth_exponent=float(slope))


def determinant_bracket(diffeo, grid_n=256):
    """[1/c, c] with c = max det Dsigma / min det Dsigma over a grid.

    Flow determinants of the conjugated field equal
    det Dsigma(x) / det Dsigma(Phi^t x), hence live inside this bracket.
    """
    g = (np.arange(grid_n) + 0.5) / grid_n
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    dets = diffeo.det_jacobian(pts)
    c = float(dets.max() / dets.min())
    return 1.0 / c, c
