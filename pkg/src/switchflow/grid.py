"""Periodic grids of function values on the torus, with spline evaluation.

A DensityGrid stores an n x n array of values; cell (j, k) is centered at
((j + 1/2)/n, (k + 1/2)/n), the first index along x1.  Mass is the cell
average (the midpoint rule for the integral over [0,1)^2, which is
spectrally accurate for smooth periodic integrands).  Point evaluation goes
through a periodic cubic B-spline interpolant of the cell-center values
(exact at the centers, C^2 in between); grids can hold signed test
functions, and `require_density` gates the nonnegativity/unit-mass checks.
"""

import io

import numpy as np
from scipy import ndimage

from .errors import ConfigError

__all__ = ["DensityGrid"]

_SPLINE_ORDER = 3


class DensityGrid:

    def __init__(self, values, require_density=False, copy=True):
        v = np.array(values, dtype=float, copy=copy)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"grid must be square 2-D, got shape {v.shape}")
        v.setflags(write=False)
        self.values = v
        self.n = v.shape[0]
        self._coeffs = None
        if require_density:
            if v.min() < 0.0:
                raise ValueError(f"density grid has negative cell {v.min():.3e}")
            if abs(self.mass() - 1.0) > 1e-10:
                raise ValueError(f"density grid mass {self.mass()!r} != 1")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_function(cls, f, n):
        g = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(g, g, indexing="ij")
        return cls(f(X, Y), copy=False)

    @classmethod
    def uniform(cls, n):
        return cls(np.ones((n, n)), copy=False)

    @classmethod
    def indicator_halfplane(cls, n):
        """Indicator of {x1 < 1/2} sampled at cell centers."""
        return cls.from_function(lambda x, y: (x < 0.5).astype(float), n)

    # -- basic functionals ---------------------------------------------------

    def mass(self):
        return float(self.values.mean())

    def l1_norm(self):
        return float(np.abs(self.values).mean())

    def l1_distance(self, other):
        return float(np.abs(self.values - other.values).mean())

    def normalized(self):
        m = self.mass()
        if m <= 0:
            raise ValueError("cannot normalize grid with nonpositive mass")
        return DensityGrid(self.values / m, copy=False)

    def cell_centers(self):
        g = (np.arange(self.n) + 0.5) / self.n
        return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)

    # -- point evaluation ----------------------------------------------------

    def _spline_coeffs(self):
        if self._coeffs is None:
            self._coeffs = ndimage.spline_filter(
                self.values, order=_SPLINE_ORDER, mode="grid-wrap")
        return self._coeffs

    def interpolate(self, points):
        """Evaluate the periodic cubic-spline surrogate at (..., 2) points."""
        pts = np.asarray(points, dtype=float)
        idx = pts * self.n - 0.5
        flat = idx.reshape(-1, 2).T
        out = ndimage.map_coordinates(
            self._spline_coeffs(), flat, order=_SPLINE_ORDER,
            mode="grid-wrap", prefilter=False)
        return out.reshape(pts.shape[:-1])

    def interpolate_indexed(self, index_coords):
        """Same, with precomputed index coordinates (points * n - 1/2)."""
        flat = index_coords.reshape(-1, 2).T
        out = ndimage.map_coordinates(
            self._spline_coeffs(), flat, order=_SPLINE_ORDER,
            mode="grid-wrap", prefilter=False)
        return out.reshape(index_coords.shape[:-1])

    # -- discrete derivatives --------------------------------------------

    def gradient_norms(self):
        """Cell field of |grad h| (Euclidean) from centered differences."""
        g1, g2 = self._centered_gradients()
        return np.hypot(g1, g2)

    def _centered_gradients(self):
        v, n = self.values, self.n
        g1 = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) * (n / 2.0)
        g2 = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) * (n / 2.0)
        return g1, g2

    def hessian_norms(self):
        """Cell field of the spectral norm of the FD Hessian."""
        v, n = self.values, self.n
        h11 = (np.roll(v, -1, 0) - 2 * v + np.roll(v, 1, 0)) * n * n
        h22 = (np.roll(v, -1, 1) - 2 * v + np.roll(v, 1, 1)) * n * n
        h12 = ((np.roll(np.roll(v, -1, 0), -1, 1) - np.roll(np.roll(v, -1, 0), 1, 1)
                - np.roll(np.roll(v, 1, 0), -1, 1) + np.roll(np.roll(v, 1, 0), 1, 1))
               * (n * n / 4.0))
        half_tr = 0.5 * (h11 + h22)
        rad = np.sqrt((0.5 * (h11 - h22)) ** 2 + h12 ** 2)
        return np.maximum(np.abs(half_tr + rad), np.abs(half_tr - rad))

    def grad_l1(self):
        return float(self.gradient_norms().mean())

    def hess_l1(self):
        return float(self.hessian_norms().mean())

    # -- IO -----------------------------------------------------------------

    def to_csv(self, path, lam=None, mode=-1):
        """Row-major CSV with header '# N=<n> lambda=<l> mode=<m> mass=<s>'."""
        lam_txt = repr(float("nan") if lam is None else float(lam))
        header = f"# N={self.n} lambda={lam_txt} mode={mode} mass={self.mass()!r}"
        buf = io.StringIO()
        buf.write(header + "\n")
        for row in self.values:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("# N="):
                raise ConfigError(f"{path}: not a grid CSV (bad header)")
            rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
        return cls(np.array(rows), copy=False)

    def to_pgm(self, path):
        """Plain (P2) 8-bit PGM heatmap, max-normalized."""
        vmax = self.values.max()
        scaled = np.zeros_like(self.values) if vmax <= 0 else self.values / vmax
        pix = np.clip(np.round(scaled * 255), 0, 255).astype(int)
        lines = ["P2", f"{self.n} {self.n}", "255"]
        lines += [" ".join(str(p) for p in row) for row in pix]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
