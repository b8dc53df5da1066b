"""Special flow over a circle rotation under a smooth roof function.

Phase space is M = {(r, h): r in S^1, 0 <= h < H(r)} with the identification
(r, H(r)) ~ (r + omega, 0).  A point moves straight up at unit speed; at
the roof it jumps to (r + omega, 0) and keeps climbing.  Crossing times
solve linear equations exactly, so the flow needs no root finding, and the
spatial Jacobian of the time-t map is an exact product of unit shears

    D Phi^t = [[1, 0], [-sum_k H'(r_k), 1]],

one factor per roof crossing at base point r_k.  Its determinant is exactly
one, and all derivative growth is carried by the Birkhoff-type sums of H'
along the rotation orbit -- crossing counts grow linearly in t, so every
derivative grows at most linearly as well.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Roof", "SpecialFlowSpec", "SpecialPoint", "special_step",
    "shear_jacobian", "growth_report", "GrowthReport", "fd_jacobian",
]

TWO_PI = 2.0 * np.pi


class Roof:
    """H(r) = base + sum_j a_j sin(2 pi k_j r + phi_j), positive on S^1."""

    def __init__(self, base, amplitudes=(), frequencies=(), phases=()):
        self.base = float(base)
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.frequencies = np.asarray(frequencies, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        if not (len(self.amplitudes) == len(self.frequencies) == len(self.phases)):
            raise ValueError("term arrays must have equal length")
        grid = np.linspace(0.0, 1.0, 4096, endpoint=False)
        self.h_min = float(self.value(grid).min())
        self.h_max = float(self.value(grid).max())
        if self.h_min <= 0:
            raise ValueError("roof must be strictly positive")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.amplitudes.size == 0:
            return np.full_like(r, self.base)
        th = TWO_PI * np.multiply.outer(r, self.frequencies) + self.phases
        return self.base + np.sin(th) @ self.amplitudes

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.amplitudes.size == 0:
            return np.zeros_like(r)
        th = TWO_PI * np.multiply.outer(r, self.frequencies) + self.phases
        return np.cos(th) @ (TWO_PI * self.frequencies * self.amplitudes)


@dataclass(frozen=True)
class SpecialFlowSpec:
    omega: float              # rotation number, irrational by construction
    roof: Roof
    omega_tag: str = ""       # formula tag, e.g. "golden"


@dataclass(frozen=True)
class SpecialPoint:
    r: float
    h: float


def _step_raw(spec, r, h, t):
    """Advance by t >= 0; returns (r, h, crossings, lifted_r).

    `lifted_r` tracks r on the universal cover (adds omega per crossing
    without wrapping), which finite-difference checks need.
    """
    H = spec.roof.value
    crossings = []
    lift = r
    remaining = float(t)
    while True:
        gap = float(H(r)) - h
        if remaining < gap:
            return r, h + remaining, crossings, lift
        crossings.append(r)
        remaining -= gap
        r = (r + spec.omega) % 1.0
        lift = lift + spec.omega
        h = 0.0


def special_step(spec, p, t):
    """Flow (r, h) for time t >= 0; returns (endpoint, crossing base points)."""
    if t < 0:
        raise ValueError("special flow is advanced forward in time only")
    if not 0.0 <= p.h < spec.roof.value(p.r):
        raise ValueError("point must satisfy 0 <= h < H(r)")
    r, h, crossings, _ = _step_raw(spec, p.r % 1.0, p.h, t)
    return SpecialPoint(r=r, h=h), np.asarray(crossings)


def shear_jacobian(spec, p, t):
    """Exact Jacobian of the time-t map: unit lower-triangular shear."""
    _, crossings = special_step(spec, p, t)
    a = -float(spec.roof.derivative(crossings).sum()) if len(crossings) else 0.0
    return np.array([[1.0, 0.0], [a, 1.0]])


@dataclass(frozen=True)
class GrowthReport:
    times: np.ndarray
    max_shear: np.ndarray       # max over samples of |sum_k H'(r_k)|
    max_crossings: np.ndarray
    growth_exponent: float      # log-log fit of max_shear against (1 + t)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# fitted_exponent={self.growth_exponent!r}\n")
            fh.write("t,max_shear,max_crossings\n")
            for t, m, c in zip(self.times, self.max_shear, self.max_crossings):
                fh.write(f"{t!r},{m!r},{int(c)}\n")


def growth_report(spec, t_max, n_samples, seed=0):
    """Sample shear magnitudes on a time ladder and fit their growth.

    For roofs with H' of zero mean the shear is a Birkhoff sum along the
    rotation and stays far below the worst-case linear bound; the fitted
    exponent quantifies that.
    """
    rng = np.random.default_rng(seed)
    rs = rng.random(n_samples)
    hs = rng.random(n_samples) * spec.roof.value(rs)
    times = np.unique(np.round(np.geomspace(1.0, float(t_max), 24)))
    max_shear = np.zeros(len(times))
    max_cross = np.zeros(len(times))
    for i, t in enumerate(times):
        shear = np.empty(n_samples)
        ncross = np.empty(n_samples)
        for k in range(n_samples):
            _, crossings = special_step(spec, SpecialPoint(rs[k], hs[k]), t)
            shear[k] = abs(spec.roof.derivative(crossings).sum()) \
                if len(crossings) else 0.0
            ncross[k] = len(crossings)
        max_shear[i] = shear.max()
        max_cross[i] = ncross.max()
    positive = max_shear > 1e-300
    if positive.sum() >= 2:
        exponent = float(np.polyfit(np.log1p(times[positive]),
                                    np.log(max_shear[positive]), 1)[0])
    else:
        exponent = 0.0
    return GrowthReport(times=times, max_shear=max_shear,
                        max_crossings=max_cross, growth_exponent=exponent)


def fd_jacobian(spec, p, t, step=1e-5, tangency_margin=1e-4):
    """Centered-difference Jacobian of the flow map on the cover.

    Returns None for samples whose endpoint sits within `tangency_margin`
    of a roof crossing (the map is not differentiable in t there, and FD
    across the jump is ill-conditioned) or whose perturbed trajectories
    cross a different number of times.
    """
    r0, h0 = p.r % 1.0, p.h
    if h0 < tangency_margin or spec.roof.value(r0) - h0 < tangency_margin:
        return None
    base = _step_raw(spec, r0, h0, t)
    gap_top = spec.roof.value(base[0]) - base[1]
    if base[1] < tangency_margin or gap_top < tangency_margin:
        return None
    n0 = len(base[2])
    cols = []
    for k, (dr, dh) in enumerate(((step, 0.0), (0.0, step))):
        plus = _step_raw(spec, r0 + dr, h0 + dh, t)
        minus = _step_raw(spec, r0 - dr, h0 - dh, t)
        if len(plus[2]) != n0 or len(minus[2]) != n0:
            return None
        d_lift = (plus[3] - minus[3]) / (2 * step)
        d_h = (plus[1] - minus[1]) / (2 * step)
        cols.append([d_lift, d_h])
    return np.array(cols).T
