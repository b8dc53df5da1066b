"""Canonical field pairs used throughout tests, demos, and the CLI.

The constant pair drives translation flows with golden/silver-ratio slopes;
the conjugated pairs push those bases through small trigonometric torus
diffeomorphisms.  Perturbation amplitudes are 1/(2 pi), so the stored
diffeomorphism bound is 1.0 and epsilon is directly the relative shear.
"""

import numpy as np

from .fields import (ALPHA, BETA, TWO_PI, ConjugatedField, ConstantField,
                     TorusDiffeo, TrigSum)

__all__ = [
    "constant_pair", "conjugated_pair", "same_sigma_pair",
    "sigma_zero", "sigma_one", "strong_shear_sigma",
]

_AMP = 1.0 / TWO_PI


def sigma_zero(eps=0.1):
    """sigma_0: axis-coupled sinusoidal perturbation, bound 1.0."""
    terms = TrigSum(
        amplitudes=[[_AMP, 0.0], [0.0, _AMP]],
        frequencies=[[0, 1], [1, 0]],
        phases=[0.0, 0.0],
    )
    return TorusDiffeo(terms, eps)


def sigma_one(eps=0.1):
    """sigma_1: same family as sigma_0 with shifted phases."""
    terms = TrigSum(
        amplitudes=[[_AMP, 0.0], [0.0, _AMP]],
        frequencies=[[0, 1], [1, 0]],
        phases=[2.0, 0.7],
    )
    return TorusDiffeo(terms, eps)


def strong_shear_sigma(eps=0.45, phase=0.0):
    """A heavier shear (still a valid diffeomorphism up to eps < 1)."""
    terms = TrigSum(
        amplitudes=[[_AMP, 0.0], [0.0, _AMP]],
        frequencies=[[0, 1], [1, 1]],
        phases=[phase, phase + 1.3],
    )
    return TorusDiffeo(terms, eps)


def constant_pair():
    """u0 = (1, alpha), u1 = (-beta, 1); det U = -(1 + alpha beta) everywhere."""
    return ConstantField([1.0, ALPHA]), ConstantField([-BETA, 1.0])


def conjugated_pair(eps=0.1):
    """The constant pair conjugated through two different diffeomorphisms."""
    u0 = ConjugatedField([1.0, ALPHA], sigma_zero(eps), slope_tag="golden")
    u1 = ConjugatedField([-BETA, 1.0], sigma_one(eps), slope_tag="silver")
    return u0, u1


def same_sigma_pair(eps=0.1):
    """Both bases conjugated by one diffeomorphism.

    Every individual flow then preserves the density proportional to
    det Dsigma, so the switching system's invariant densities have that
    same closed form -- a strong ground truth for the operator pipeline.
    """
    sig = sigma_zero(eps)
    u0 = ConjugatedField([1.0, ALPHA], sig, slope_tag="golden")
    u1 = ConjugatedField([-BETA, 1.0], sig, slope_tag="silver")
    return u0, u1


def sigma_density_grid(diffeo, n):
    """Unit-mass grid of the invariant density proportional to det Dsigma."""
    from .grid import DensityGrid
    g = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    vals = diffeo.det_jacobian(pts)
    return DensityGrid(vals / vals.mean(), copy=False)
