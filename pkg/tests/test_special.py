import numpy as np
import pytest

from switchflow.fields import ALPHA
from switchflow.special import (Roof, SpecialFlowSpec, SpecialPoint,
                                fd_jacobian, growth_report, shear_jacobian,
                                special_step)


@pytest.fixture(scope="module")
def sin_spec():
    return SpecialFlowSpec(omega=ALPHA,
                           roof=Roof(1.0, [0.3], [1.0], [0.0]),
                           omega_tag="golden")


@pytest.fixture(scope="module")
def flat_spec():
    return SpecialFlowSpec(omega=ALPHA, roof=Roof(1.0), omega_tag="golden")


def test_unit_roof_arithmetic(flat_spec):
    p, crossings = special_step(flat_spec, SpecialPoint(0.0, 0.0), 5.5)
    assert len(crossings) == 5
    assert p.h == pytest.approx(0.5)
    assert p.r == pytest.approx((5 * ALPHA) % 1.0)


def test_zero_time_identity(sin_spec):
    p, crossings = special_step(sin_spec, SpecialPoint(0.3, 0.2), 0.0)
    assert (p.r, p.h) == (0.3, 0.2)
    assert len(crossings) == 0


def test_semigroup_property(sin_spec, rng):
    for _ in range(20):
        r = rng.random()
        h = rng.random() * sin_spec.roof.value(r) * 0.99
        t1, t2 = rng.random(2) * 7
        p1, c1 = special_step(sin_spec, SpecialPoint(r, h), t1)
        p2, c2 = special_step(sin_spec, p1, t2)
        q, c = special_step(sin_spec, SpecialPoint(r, h), t1 + t2)
        assert abs(q.r - p2.r) < 1e-9
        assert abs(q.h - p2.h) < 1e-9
        assert len(c) == len(c1) + len(c2)


def test_crossing_count_bounds(sin_spec, rng):
    roof = sin_spec.roof
    for _ in range(50):
        r = rng.random()
        t = rng.random() * 200
        _, crossings = special_step(sin_spec, SpecialPoint(r, 0.0), t)
        n = len(crossings)
        assert t / roof.h_max - 1 <= n <= t / roof.h_min + 1


def test_shear_is_identity_for_flat_roof(flat_spec, rng):
    for _ in range(10):
        J = shear_jacobian(flat_spec, SpecialPoint(rng.random(), 0.5),
                           rng.random() * 50)
        assert np.array_equal(J, np.eye(2))


def test_shear_determinant_exactly_one(sin_spec, rng):
    for _ in range(500):
        r = rng.random()
        h = rng.random() * sin_spec.roof.value(r)
        J = shear_jacobian(sin_spec, SpecialPoint(r, h), rng.random() * 30)
        assert J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0] == 1.0
        assert J[0, 0] == 1.0 and J[1, 1] == 1.0 and J[0, 1] == 0.0


def test_shear_equals_crossing_sum(sin_spec):
    p = SpecialPoint(0.21, 0.4)
    _, crossings = special_step(sin_spec, p, 10.0)
    J = shear_jacobian(sin_spec, p, 10.0)
    assert J[1, 0] == pytest.approx(-sin_spec.roof.derivative(crossings).sum())


def test_shear_matches_fd(sin_spec, rng):
    checked = 0
    for _ in range(200):
        r = rng.random()
        h = rng.random() * sin_spec.roof.value(r) * 0.98 + 0.005
        t = rng.random() * 10
        fd = fd_jacobian(sin_spec, SpecialPoint(r, h), t)
        if fd is None:
            continue
        J = shear_jacobian(sin_spec, SpecialPoint(r, h), t)
        assert np.abs(fd - J).max() < 1e-5
        checked += 1
    assert checked > 100


def test_growth_report(sin_spec):
    rep = growth_report(sin_spec, 200.0, 32, seed=1)
    assert rep.growth_exponent <= 1.1
    assert np.all(rep.max_crossings
                  <= (1.0 / sin_spec.roof.h_min) * (1.0 + rep.times) * 1.05)


def test_growth_flat_roof(flat_spec):
    rep = growth_report(flat_spec, 50.0, 8)
    assert np.all(rep.max_shear == 0.0)


def test_growth_amplitude_scaling():
    """Doubling the roof amplitude at fixed t at most doubles the shear
    (H' sums are linear in the amplitude), up to a 5% crossing-shift margin."""
    small = SpecialFlowSpec(ALPHA, Roof(1.0, [0.1], [1.0], [0.0]))
    big = SpecialFlowSpec(ALPHA, Roof(1.0, [0.2], [1.0], [0.0]))
    rng = np.random.default_rng(0)
    t = 25.0
    shear_small, shear_big = 0.0, 0.0
    for _ in range(100):
        p = SpecialPoint(rng.random(), 0.0)
        shear_small = max(shear_small, abs(shear_jacobian(small, p, t)[1, 0]))
        shear_big = max(shear_big, abs(shear_jacobian(big, p, t)[1, 0]))
    assert shear_big <= 2 * shear_small * 1.25


def test_roof_validation():
    with pytest.raises(ValueError):
        Roof(0.2, [0.5], [1.0], [0.0])   # dips below zero
    with pytest.raises(ValueError):
        special_step(SpecialFlowSpec(ALPHA, Roof(1.0)),
                     SpecialPoint(0.0, 1.5), 1.0)
    with pytest.raises(ValueError):
        special_step(SpecialFlowSpec(ALPHA, Roof(1.0)),
                     SpecialPoint(0.0, 0.5), -1.0)


def test_growth_csv(tmp_path, sin_spec):
    rep = growth_report(sin_spec, 20.0, 8)
    path = tmp_path / "growth.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# fitted_exponent=")
    assert lines[1] == "t,max_shear,max_crossings"
    assert len(lines) == 2 + len(rep.times)
