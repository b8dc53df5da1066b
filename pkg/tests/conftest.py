import numpy as np
import pytest

import switchflow as sf
from switchflow.quadrature import QuadratureRule
from switchflow.transfer import TransferOperator


@pytest.fixture(scope="session")
def constant_pair():
    return sf.constant_pair()


@pytest.fixture(scope="session")
def conjugated_pair():
    return sf.conjugated_pair(0.1)


@pytest.fixture(scope="session")
def panel_quad():
    return QuadratureRule.exp_panels(1.0)


@pytest.fixture(scope="session")
def panel_quad_coarse():
    """Cheaper panel rule for internal-consistency tests on slow fields."""
    return QuadratureRule.exp_panels(1.0, points_per_panel=10,
                                     first_width=2.5, growth=1.8,
                                     tail_mass=1e-7)


@pytest.fixture(scope="session")
def laguerre_quad():
    return QuadratureRule.gauss_laguerre(32, 1.0)


@pytest.fixture(scope="session")
def const_op_small(constant_pair, panel_quad):
    """Constant-pair operator on a 32-grid, shared across tests."""
    u0, u1 = constant_pair
    return TransferOperator(u0, u1, panel_quad, 32).build()


@pytest.fixture(scope="session")
def conj_op_small(conjugated_pair, panel_quad_coarse):
    """Conjugated-pair operator on a 24-grid, shared across tests."""
    u0, u1 = conjugated_pair
    return TransferOperator(u0, u1, panel_quad_coarse, 24).build()


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def sin_mode_truth(u0, u1, lam, n):
    """Closed form of Q(1 + sin(2 pi x1)) for constant fields.

    The mode picks up the product of switching-time characteristic
    functions at the frequencies -2 pi u1_1 and -2 pi u0_1 (independent
    exponential oracle, no transfer-operator code involved).
    """
    th1 = -2 * np.pi * u1.vector[0]
    th0 = -2 * np.pi * u0.vector[0]
    c = (lam / (lam - 1j * th1)) * (lam / (lam - 1j * th0))
    g = (np.arange(n) + 0.5) / n
    X, _ = np.meshgrid(g, g, indexing="ij")
    return 1 + np.imag(c * np.exp(2j * np.pi * X)), c
