import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpsolid.errors import DivergentMomentError, PotentialError
from gpsolid.potential import (
    Stability,
    ball_volume,
    energy_lower_bound,
    fourier_transform,
    integral,
    make_potential,
    moments,
    smeared_delta_self_convolution,
    stability_check,
)


def test_gaussian_moments_closed_form(gaussian):
    m = moments(gaussian)
    assert m.first == pytest.approx(math.sqrt(2 * math.pi), rel=1e-10)
    assert m.absolute == pytest.approx(m.first, rel=1e-12)
    assert m.second == pytest.approx(math.sqrt(2 * math.pi), rel=1e-9)


def test_gaussian_2d_integral(gaussian2d):
    assert integral(gaussian2d) == pytest.approx(2 * math.pi, rel=1e-10)


def test_vdw_integral(vdw):
    # int dx / (1 + x^6) = 2 pi / 3
    assert integral(vdw) == pytest.approx(2 * math.pi / 3, rel=1e-10)


def test_vdw_second_moment(vdw):
    # int x^2 / (1 + x^6) = pi / 3
    assert moments(vdw).second == pytest.approx(math.pi / 3, rel=1e-9)


def test_step_moments():
    p = make_potential("step", {"c": 2.0, "R0": 0.5})
    m = moments(p)
    assert m.first == pytest.approx(2.0, rel=1e-12)
    assert m.second == pytest.approx(2 * 2 * 0.5**3 / 3, rel=1e-12)


def test_pure_contact():
    p = make_potential("pure-contact", {"strength": 3.0})
    assert integral(p) == 3.0
    assert fourier_transform(p, 7.0) == pytest.approx(3.0 / math.sqrt(2 * math.pi))


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 3.0, 7.5])
def test_gaussian_transform(gaussian, k):
    assert fourier_transform(gaussian, k) == pytest.approx(math.exp(-k * k / 2), abs=1e-11)


@pytest.mark.parametrize("k", [0.3, 1.0, 4.0])
def test_gaussian_transform_2d(gaussian2d, k):
    assert fourier_transform(gaussian2d, k) == pytest.approx(math.exp(-k * k / 2), abs=1e-10)


def test_step_transform():
    p = make_potential("step")
    k = np.array([0.5, 2.0, 5.0])
    exact = math.sqrt(2 / math.pi) * np.sin(k) / k
    assert np.allclose(fourier_transform(p, k), exact, atol=1e-11)


def test_uniform_grid_path_matches_generic(vdw):
    k = np.linspace(0.01, 20, 1000)
    fast = fourier_transform(vdw, k)
    slow = np.array([fourier_transform(vdw, kk) for kk in k[::97]])
    assert np.allclose(fast[::97], slow, atol=1e-10)


def test_transform_rejects_negative(vdw):
    with pytest.raises(ValueError):
        fourier_transform(vdw, -1.0)


@given(st.floats(0.1, 5.0), st.floats(0.2, 3.0))
@settings(max_examples=15, deadline=None)
def test_scaled_gaussian_integral(c, sigma):
    p = make_potential("gaussian", {"c": c, "sigma": sigma})
    assert integral(p) == pytest.approx(c * sigma * math.sqrt(2 * math.pi), rel=1e-9)


def test_divergent_second_moment():
    x = np.linspace(0, 50, 2001)
    p = make_potential("tabulated", data=(x, 1 / (1 + x**2.5)), s=2.5, kappa=1.0)
    with pytest.raises(DivergentMomentError):
        moments(p)
    assert math.isinf(moments(p, allow_divergent=True).second)


def test_errors():
    with pytest.raises(PotentialError):
        make_potential("nope")
    with pytest.raises(PotentialError):
        make_potential("vdw", {"zz": 1})
    with pytest.raises(PotentialError):
        make_potential("gaussian", {"sigma": -1})
    with pytest.raises(PotentialError):
        make_potential("vdw", s=0.5)


def test_nonpositive_integral_rejected():
    x = np.linspace(0, 10, 501)
    with pytest.raises(PotentialError):
        make_potential("tabulated", data=(x, -np.exp(-x * x)), s=8, kappa=5.0)


def test_smeared_delta_normalized():
    for d, r in [(1, 0.5), (2, 0.7)]:
        x = np.linspace(0, 2 * r, 4001)
        v = smeared_delta_self_convolution(d, r, x)
        if d == 1:
            total = 2 * np.trapezoid(v, x)
        else:
            total = np.trapezoid(2 * math.pi * x * v, x)
        assert total == pytest.approx(1.0, rel=1e-4)


def test_ball_volume():
    assert ball_volume(1, 2.0) == pytest.approx(4.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)


def test_stability_classification(vdw, gaussian):
    assert stability_check(vdw) is Stability.STABLE_SUFFICIENT
    assert stability_check(gaussian) is Stability.STABLE_SUFFICIENT
    assert stability_check(make_potential("pure-contact")) is Stability.STABLE_SUFFICIENT
    assert stability_check(make_potential("truncated-lennard-jones")) is Stability.INDETERMINATE


def test_energy_lower_bound_scaling(vdw):
    assert energy_lower_bound(vdw, 2.0, 10.0) == pytest.approx(4 * energy_lower_bound(vdw, 1.0, 10.0))
    assert energy_lower_bound(vdw, 1.0, 10.0) < 0


def test_scaled_potential(vdw):
    q = vdw.scaled(3.0)
    assert integral(q) == pytest.approx(3 * integral(vdw))
    assert q.epsilon == pytest.approx(3 * vdw.epsilon)
