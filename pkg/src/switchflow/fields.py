"""Driving vector fields on the 2-torus.

Three field kinds are supported:

* ``ConstantField`` -- u(x) = v, the translation flow generator.
* ``TrigField`` -- a constant mean plus a trigonometric sum, i.e. a real
  trigonometric polynomial in (x1, x2).
* ``ConjugatedField`` -- the pullback of a constant field through a torus
  diffeomorphism sigma:  Dsigma(x) u(x) = base.  Its flow is the straight
  line flow of ``base`` conjugated by sigma, so it preserves the smooth
  density |det Dsigma| and, for an irrational-slope base, has no periodic
  orbits.  This is the constructive way to build fields that keep flow
  Jacobians bounded in time.

All evaluation methods accept arrays of shape (..., 2) and are pure; field
objects are immutable after construction and safe to share across workers.
The ``rhs_*`` methods are the hot path used by the batched integrators in
:mod:`switchflow.flows`; they write into caller-provided buffers to avoid
per-step allocation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DiffeoInversionError, SingularMatrixError

__all__ = [
    "TWO_PI", "ALPHA", "BETA",
    "TrigSum", "TorusDiffeo",
    "VectorField", "ConstantField", "TrigField", "ConjugatedField",
    "make_conjugated_field", "DriveMatrix", "eval_drive_matrix",
    "drive_matrices", "TransversalityReport", "check_transversality",
    "field_from_json", "field_to_json", "diffeo_from_json", "diffeo_to_json",
]

TWO_PI = 2.0 * np.pi

# Standard irrational constants used by the shipped field pairs: golden-ratio
# and silver-ratio rotations have well-separated continued fractions.
ALPHA = (np.sqrt(5.0) - 1.0) / 2.0
BETA = np.sqrt(2.0) - 1.0

_DET_FLOOR = 1e-12


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"expected (..., 2) point array, got shape {x.shape}")
    return x


class TrigSum:
    """Finite sum  p(x) = sum_j a_j sin(2 pi k_j . x + phi_j)  with a_j in R^2.

    Frequencies k_j are integer 2-vectors, so p is 1-periodic in both
    coordinates.  Derivatives of any order are available in closed form via
    the phase-shift rule d/dtheta sin(theta) = sin(theta + pi/2).
    """

    def __init__(self, amplitudes, frequencies, phases):
        self.amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=float))
        self.frequencies = np.atleast_2d(np.asarray(frequencies, dtype=float))
        self.phases = np.atleast_1d(np.asarray(phases, dtype=float))
        if not (self.amplitudes.shape == self.frequencies.shape
                and self.amplitudes.shape[0] == self.phases.shape[0]
                and self.amplitudes.shape[1] == 2):
            raise ValueError("amplitudes/frequencies must be (T, 2), phases (T,)")
        if not np.allclose(self.frequencies, np.round(self.frequencies)):
            raise ValueError("frequencies must be integer vectors (periodicity)")
        for a in (self.amplitudes, self.frequencies, self.phases):
            a.setflags(write=False)
        self.n_terms = self.phases.shape[0]

    def _theta(self, x):
        return x @ (TWO_PI * self.frequencies.T) + self.phases

    def value(self, x):
        x = _as_points(x)
        return np.sin(self._theta(x)) @ self.amplitudes

    def jacobian(self, x):
        """d p_i / d x_j as an (..., 2, 2) array."""
        x = _as_points(x)
        c = np.cos(self._theta(x))
        coef = TWO_PI * np.einsum("ti,tj->tij", self.amplitudes, self.frequencies)
        return np.einsum("...t,tij->...ij", c, coef)

    def jacobian_partial(self, x, k):
        """d/dx_k of the Jacobian, an (..., 2, 2) array."""
        x = _as_points(x)
        s = np.sin(self._theta(x))
        coef = -(TWO_PI ** 2) * np.einsum(
            "ti,tj,t->tij", self.amplitudes, self.frequencies, self.frequencies[:, k])
        return np.einsum("...t,tij->...ij", s, coef)

    def partial(self, x, order):
        """Partial derivative with multi-index ``order=(n1, n2)`` of any total order."""
        n1, n2 = order
        x = _as_points(x)
        n = n1 + n2
        shift = self._theta(x) + n * (np.pi / 2.0)
        coef = ((TWO_PI * self.frequencies[:, 0]) ** n1
                * (TWO_PI * self.frequencies[:, 1]) ** n2)
        return np.sin(shift) @ (coef[:, None] * self.amplitudes)

    def max_jacobian_norm(self, grid_n=128):
        """sup of the spectral norm of Dp, scanned on a corner-aligned grid.

        Lattice points catch the extrema of integer-frequency modes exactly;
        the value is inflated by 1e-6 so downstream contraction bounds err
        on the safe side.
        """
        g = np.arange(grid_n) / grid_n
        pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        top = np.linalg.norm(self.jacobian(pts), ord=2, axis=(1, 2)).max()
        return float(top) * (1.0 + 1e-6)


class TorusDiffeo:
    """sigma(x) = x + eps * p(x) with p a TrigSum perturbation.

    ``eps * sup|Dp| < 1`` makes sigma a diffeomorphism of the torus homotopic
    to the identity; the stored ``bound`` is 1 / sup|Dp|, and construction
    fails if eps is not strictly below it.  The inverse is evaluated by the
    damped fixed-point iteration y <- x - eps p(y), which is a contraction
    with rate eps * sup|Dp|.
    """

    MAX_INVERSE_ITERS = 50
    INVERSE_TOL = 1e-13

    def __init__(self, perturbation, epsilon, validation_grid=64):
        self.perturbation = perturbation
        self.epsilon = float(epsilon)
        self.bound = 1.0 / max(perturbation.max_jacobian_norm(), 1e-300)
        if not 0.0 <= self.epsilon < self.bound:
            raise ValueError(
                f"epsilon={self.epsilon} is not below the diffeomorphism bound "
                f"{self.bound:.6g}")
        g = (np.arange(validation_grid) + 0.5) / validation_grid
        pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        dets = self.det_jacobian(pts)
        if dets.min() <= 0.0:
            raise ValueError("det Dsigma must be positive everywhere")

    @classmethod
    def identity(cls):
        return cls(TrigSum(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1)), 0.0)

    def forward(self, x):
        """sigma evaluated on the universal cover (no wrapping)."""
        x = _as_points(x)
        return x + self.epsilon * self.perturbation.value(x)

    def jacobian(self, x):
        x = _as_points(x)
        J = self.epsilon * self.perturbation.jacobian(x)
        J[..., 0, 0] += 1.0
        J[..., 1, 1] += 1.0
        return J

    def det_jacobian(self, x):
        J = self.jacobian(x)
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]

    def jacobian_partial(self, x, k):
        return self.epsilon * self.perturbation.jacobian_partial(x, k)

    def inverse(self, x):
        """Solve sigma(y) = x on the cover; returns the lift closest to x."""
        x = _as_points(x)
        y = x.copy()
        for _ in range(self.MAX_INVERSE_ITERS):
            ynew = x - self.epsilon * self.perturbation.value(y)
            err = np.max(np.abs(ynew - y)) if ynew.size else 0.0
            y = ynew
            if err < self.INVERSE_TOL:
                return y
        raise DiffeoInversionError(
            f"sigma inverse did not reach {self.INVERSE_TOL} in "
            f"{self.MAX_INVERSE_ITERS} iterations (last change {err:.3e})")


class VectorField:
    """Common interface; concrete kinds override the evaluation methods."""

    kind = "abstract"

    def value(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def divergence(self, x):
        J = self.jacobian(x)
        return J[..., 0, 0] + J[..., 1, 1]

    def partial(self, x, order):
        """Coordinatewise partial of u with multi-index (n1, n2), total order <= 4.

        Orders 0 and 1 are exact.  Higher orders fall back to iterated
        centered differences of the analytic Jacobian (step 1e-3 per level),
        which is accurate to O(step^2) at each level; subclasses with closed
        forms override this.
        """
        n1, n2 = order
        n = n1 + n2
        if n > 4:
            raise ValueError("partial derivatives supported up to total order 4")
        if n == 0:
            return self.value(x)
        if n == 1:
            k = 0 if n1 == 1 else 1
            return self.jacobian(x)[..., :, k]
        x = _as_points(x)
        k, sub = (0, (n1 - 1, n2)) if n1 > 0 else (1, (n1, n2 - 1))
        step = 1e-3
        e = np.zeros(2)
        e[k] = step
        return (self.partial(x + e, sub) - self.partial(x - e, sub)) / (2 * step)

    # -- hot path -------------------------------------------------------
    # rhs(x, out_u, s): velocities into out_u (N,2)
    # rhs_div(x, out_u, out_d, s): velocities + divergence (N,)
    # rhs_jac(x, out_u, out_j, s): velocities + Jacobian (N,2,2)
    # Scratch s comes from make_scratch(n) and is reused across steps.

    def make_scratch(self, n):
        return {}

    def rhs(self, x, out_u, s):
        out_u[...] = self.value(x)

    def rhs_div(self, x, out_u, out_d, s):
        out_u[...] = self.value(x)
        out_d[...] = self.divergence(x)

    def rhs_jac(self, x, out_u, out_j, s):
        out_u[...] = self.value(x)
        out_j[...] = self.jacobian(x)


class ConstantField(VectorField):
    """u(x) = v everywhere; the flow translates at constant velocity."""

    kind = "constant"

    def __init__(self, vector):
        self.vector = np.asarray(vector, dtype=float).reshape(2).copy()
        self.vector.setflags(write=False)

    def value(self, x):
        x = _as_points(x)
        return np.broadcast_to(self.vector, x.shape).copy()

    def jacobian(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1] + (2, 2))

    def divergence(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1])

    def partial(self, x, order):
        if sum(order) > 4:
            raise ValueError("partial derivatives supported up to total order 4")
        if sum(order) == 0:
            return self.value(x)
        x = _as_points(x)
        return np.zeros(x.shape)

    def rhs(self, x, out_u, s):
        out_u[:, 0] = self.vector[0]
        out_u[:, 1] = self.vector[1]

    def rhs_div(self, x, out_u, out_d, s):
        self.rhs(x, out_u, s)
        out_d[...] = 0.0

    def rhs_jac(self, x, out_u, out_j, s):
        self.rhs(x, out_u, s)
        out_j[...] = 0.0


class TrigField(VectorField):
    """u(x) = mean + p(x) with p a TrigSum (a trigonometric polynomial)."""

    kind = "trig"

    def __init__(self, mean, terms):
        self.mean = np.asarray(mean, dtype=float).reshape(2).copy()
        self.mean.setflags(write=False)
        self.terms = terms

    def value(self, x):
        return self.mean + self.terms.value(x)

    def jacobian(self, x):
        return self.terms.jacobian(x)

    def partial(self, x, order):
        if sum(order) > 4:
            raise ValueError("partial derivatives supported up to total order 4")
        if sum(order) == 0:
            return self.value(x)
        return self.terms.partial(x, order)

    def make_scratch(self, n):
        t = self.terms.n_terms
        return {"th": np.empty((n, t)), "tr": np.empty((n, t))}

    def rhs(self, x, out_u, s):
        th = np.matmul(x, TWO_PI * self.terms.frequencies.T, out=s["th"])
        th += self.terms.phases
        np.sin(th, out=s["tr"])
        np.matmul(s["tr"], self.terms.amplitudes, out=out_u)
        out_u += self.mean

    def rhs_div(self, x, out_u, out_d, s):
        self.rhs(x, out_u, s)
        np.cos(s["th"], out=s["tr"])
        coef = TWO_PI * (self.terms.amplitudes[:, 0] * self.terms.frequencies[:, 0]
                         + self.terms.amplitudes[:, 1] * self.terms.frequencies[:, 1])
        np.matmul(s["tr"], coef, out=out_d)

    def rhs_jac(self, x, out_u, out_j, s):
        self.rhs(x, out_u, s)
        np.cos(s["th"], out=s["tr"])
        a, k = self.terms.amplitudes, self.terms.frequencies
        for i in range(2):
            for j in range(2):
                np.matmul(s["tr"], TWO_PI * a[:, i] * k[:, j], out=out_j[:, i, j])


class ConjugatedField(VectorField):
    """Pullback of a constant field through a torus diffeomorphism.

    Defined by  Dsigma(x) u(x) = base,  i.e.  u(x) = Dsigma(x)^{-1} base.
    The flow of u is  Psi = sigma^{-1} o (translation by t*base) o sigma,
    so it preserves the density proportional to |det Dsigma| and its flow
    Jacobians stay bounded uniformly in time.
    """

    kind = "conjugated"

    def __init__(self, base, diffeo, slope_tag=None):
        self.base = np.asarray(base, dtype=float).reshape(2).copy()
        self.base.setflags(write=False)
        self.diffeo = diffeo
        # Irrationality of the base slope is the caller's modelling
        # responsibility; the tag is carried as metadata only.
        self.slope_tag = slope_tag

    def value(self, x):
        J = self.diffeo.jacobian(x)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        b0, b1 = self.base
        u = np.empty(J.shape[:-1])
        u[..., 0] = (J[..., 1, 1] * b0 - J[..., 0, 1] * b1) / det
        u[..., 1] = (-J[..., 1, 0] * b0 + J[..., 0, 0] * b1) / det
        return u

    def jacobian(self, x):
        x = _as_points(x)
        J = self.diffeo.jacobian(x)
        u = self.value(x)
        out = np.empty(x.shape[:-1] + (2, 2))
        for k in range(2):
            Hk = self.diffeo.jacobian_partial(x, k)
            v = -np.einsum("...ij,...j->...i", Hk, u)
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            out[..., 0, k] = (J[..., 1, 1] * v[..., 0] - J[..., 0, 1] * v[..., 1]) / det
            out[..., 1, k] = (-J[..., 1, 0] * v[..., 0] + J[..., 0, 0] * v[..., 1]) / det
        return out

    def sigma_det(self, x):
        """det Dsigma(x); the flow-invariant density of u is proportional to it."""
        return self.diffeo.det_jacobian(x)

    def make_scratch(self, n):
        t = self.diffeo.perturbation.n_terms
        return {
            "th": np.empty((n, t)), "c": np.empty((n, t)), "sn": np.empty((n, t)),
            "m": np.empty((n, 4)), "h": np.empty((n, 8)),
            "det": np.empty(n), "t1": np.empty(n), "t2": np.empty(n),
        }

    def _sigma_jac_flat(self, x, s):
        """Fill s['m'] with rows (m00, m01, m10, m11) of Dsigma and s['det']."""
        p = self.diffeo.perturbation
        th = np.matmul(x, TWO_PI * p.frequencies.T, out=s["th"])
        th += p.phases
        np.cos(th, out=s["c"])
        eps = self.diffeo.epsilon
        a, k = p.amplitudes, p.frequencies
        m = s["m"]
        for col, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            np.matmul(s["c"], eps * TWO_PI * a[:, i] * k[:, j], out=m[:, col])
        m[:, 0] += 1.0
        m[:, 3] += 1.0
        np.multiply(m[:, 0], m[:, 3], out=s["det"])
        s["det"] -= m[:, 1] * m[:, 2]

    def rhs(self, x, out_u, s):
        self._sigma_jac_flat(x, s)
        m, det = s["m"], s["det"]
        b0, b1 = self.base
        np.multiply(m[:, 3], b0, out=out_u[:, 0])
        out_u[:, 0] -= m[:, 1] * b1
        out_u[:, 0] /= det
        np.multiply(m[:, 0], b1, out=out_u[:, 1])
        out_u[:, 1] -= m[:, 2] * b0
        out_u[:, 1] /= det

    def _sigma_hess_flat(self, s):
        """Fill s['h'] with eps * d(Dsigma)_{ij}/dx_k, columns (i,j,k) row-major."""
        p = self.diffeo.perturbation
        np.sin(s["th"], out=s["sn"])
        eps = self.diffeo.epsilon
        a, k = p.amplitudes, p.frequencies
        h = s["h"]
        col = 0
        for i in range(2):
            for j in range(2):
                for kk in range(2):
                    np.matmul(s["sn"],
                              -eps * TWO_PI ** 2 * a[:, i] * k[:, j] * k[:, kk],
                              out=h[:, col])
                    col += 1

    def rhs_div(self, x, out_u, out_d, s):
        self.rhs(x, out_u, s)
        self._sigma_hess_flat(s)
        m, det, h = s["m"], s["det"], s["h"]
        u0, u1 = out_u[:, 0], out_u[:, 1]
        # div u = -sum_k [ Dsigma^{-1} (d_k Dsigma) u ]_k
        # k = 0 row, first component; k = 1 row, second component.
        v0 = s["t1"]
        np.multiply(h[:, 0], u0, out=v0)
        v0 += h[:, 2] * u1                  # (d_0 Dsigma u)_0
        v1 = s["t2"]
        np.multiply(h[:, 4], u0, out=v1)
        v1 += h[:, 6] * u1                  # (d_0 Dsigma u)_1
        out_d[...] = (m[:, 3] * v0 - m[:, 1] * v1)
        np.multiply(h[:, 1], u0, out=v0)
        v0 += h[:, 3] * u1                  # (d_1 Dsigma u)_0
        np.multiply(h[:, 5], u0, out=v1)
        v1 += h[:, 7] * u1                  # (d_1 Dsigma u)_1
        out_d += (-m[:, 2] * v0 + m[:, 0] * v1)
        out_d /= -det

    def rhs_jac(self, x, out_u, out_j, s):
        self.rhs(x, out_u, s)
        self._sigma_hess_flat(s)
        m, det, h = s["m"], s["det"], s["h"]
        u0, u1 = out_u[:, 0], out_u[:, 1]
        for k in range(2):
            v0 = h[:, 0 + k] * u0 + h[:, 2 + k] * u1
            v1 = h[:, 4 + k] * u0 + h[:, 6 + k] * u1
            out_j[:, 0, k] = -(m[:, 3] * v0 - m[:, 1] * v1) / det
            out_j[:, 1, k] = -(-m[:, 2] * v0 + m[:, 0] * v1) / det


def make_conjugated_field(base, sigma, slope_tag=None):
    """Build the field u with Dsigma(x) u(x) = base.

    The returned field satisfies the conjugacy relation exactly (closed-form
    2x2 solve), and its single-flow invariant density is proportional to
    |det Dsigma|, which downstream tests use as ground truth.
    """
    return ConjugatedField(base, sigma, slope_tag=slope_tag)


# ---------------------------------------------------------------------------
# Drive matrix and transversality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriveMatrix:
    """U(x) with columns (u1(x), u0(x)), its determinant, and inverse."""
    matrix: np.ndarray
    det: float
    inverse: np.ndarray


def eval_drive_matrix(u0, u1, x):
    """Evaluate U(x) = (u1(x), u0(x)); raises if transversality fails at x."""
    x = _as_points(x)
    U = np.stack([u1.value(x), u0.value(x)], axis=-1)
    det = float(U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0])
    if abs(det) < _DET_FLOOR:
        raise SingularMatrixError(
            f"drive matrix singular at x={np.asarray(x)}: |det U|={abs(det):.3e}",
            point=np.asarray(x))
    inv = np.array([[U[..., 1, 1], -U[..., 0, 1]],
                    [-U[..., 1, 0], U[..., 0, 0]]]) / det
    return DriveMatrix(matrix=U, det=det, inverse=inv)


def drive_matrices(u0, u1, x):
    """Batched U(x) and det U(x) over points x of shape (..., 2)."""
    x = _as_points(x)
    U = np.stack([u1.value(x), u0.value(x)], axis=-1)
    det = U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0]
    bad = np.abs(det) < _DET_FLOOR
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise SingularMatrixError(
            f"drive matrix singular at sampled point index {tuple(idx)}",
            point=x[tuple(idx)])
    return U, det


def invert_2x2(U, det):
    inv = np.empty_like(U)
    inv[..., 0, 0] = U[..., 1, 1]
    inv[..., 0, 1] = -U[..., 0, 1]
    inv[..., 1, 0] = -U[..., 1, 0]
    inv[..., 1, 1] = U[..., 0, 0]
    inv /= det[..., None, None]
    return inv


@dataclass(frozen=True)
class TransversalityReport:
    min_abs_det: float
    passed: bool
    threshold: float
    argmin: np.ndarray
    grid_resolution: int


def check_transversality(u0, u1, grid_resolution=64, threshold=1e-6):
    """Scan |det U| over an evenly spaced grid; reports, never raises."""
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    g = (np.arange(grid_resolution) + 0.5) / grid_resolution
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    U = np.stack([u1.value(pts), u0.value(pts)], axis=-1)
    det = np.abs(U[:, 0, 0] * U[:, 1, 1] - U[:, 0, 1] * U[:, 1, 0])
    i = int(np.argmin(det))
    return TransversalityReport(
        min_abs_det=float(det[i]),
        passed=bool(det[i] > threshold),
        threshold=float(threshold),
        argmin=pts[i],
        grid_resolution=grid_resolution,
    )


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------
# {"kind": "constant", "vector": [vx, vy]}
# {"kind": "trig", "mean": [mx, my],
#  "terms": [{"amplitude": [a1, a2], "frequency": [k1, k2], "phase": p}, ...]}
# {"kind": "conjugated", "base": [bx, by], "slope_tag": "...",   # tag optional
#  "sigma": {"epsilon": e, "terms": [ ...same term schema... ]}}

def _check_keys(obj, allowed, required, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)} in {where}")


def _trig_sum_from_json(terms, where):
    amps, freqs, phases = [], [], []
    for i, t in enumerate(terms):
        _check_keys(t, {"amplitude", "frequency", "phase"},
                    {"amplitude", "frequency"}, f"{where}.terms[{i}]")
        amps.append(t["amplitude"])
        freqs.append(t["frequency"])
        phases.append(t.get("phase", 0.0))
    return TrigSum(amps, freqs, phases)


def diffeo_from_json(obj, where="sigma"):
    _check_keys(obj, {"epsilon", "terms"}, {"epsilon", "terms"}, where)
    return TorusDiffeo(_trig_sum_from_json(obj["terms"], where), obj["epsilon"])


def field_from_json(obj, where="field"):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{where}: expected an object with a 'kind' key")
    kind = obj["kind"]
    if kind == "constant":
        _check_keys(obj, {"kind", "vector"}, {"vector"}, where)
        return ConstantField(obj["vector"])
    if kind == "trig":
        _check_keys(obj, {"kind", "mean", "terms"}, {"terms"}, where)
        return TrigField(obj.get("mean", [0.0, 0.0]),
                         _trig_sum_from_json(obj["terms"], where))
    if kind == "conjugated":
        _check_keys(obj, {"kind", "base", "sigma", "slope_tag"},
                    {"base", "sigma"}, where)
        return ConjugatedField(obj["base"],
                               diffeo_from_json(obj["sigma"], f"{where}.sigma"),
                               slope_tag=obj.get("slope_tag"))
    raise ConfigError(f"{where}: unknown field kind {kind!r}")


def _trig_sum_to_json(ts):
    return [{"amplitude": list(map(float, a)),
             "frequency": list(map(float, k)),
             "phase": float(p)}
            for a, k, p in zip(ts.amplitudes, ts.frequencies, ts.phases)]


def diffeo_to_json(d):
    return {"epsilon": d.epsilon, "terms": _trig_sum_to_json(d.perturbation)}


def field_to_json(f):
    if f.kind == "constant":
        return {"kind": "constant", "vector": list(map(float, f.vector))}
    if f.kind == "trig":
        return {"kind": "trig", "mean": list(map(float, f.mean)),
                "terms": _trig_sum_to_json(f.terms)}
    if f.kind == "conjugated":
        out = {"kind": "conjugated", "base": list(map(float, f.base)),
               "sigma": diffeo_to_json(f.diffeo)}
        if f.slope_tag is not None:
            out["slope_tag"] = f.slope_tag
        return out
    raise ValueError(f"cannot serialize field kind {f.kind!r}")
