import math

import numpy as np
import pytest

from gpsolid.criticality import (
    criticality_report,
    instability_threshold,
    lower_bound_general,
    lower_bound_nonneg,
    lower_bound_radial,
    mu_one,
    pohozaev_margin,
)
from gpsolid.errors import ScanIncompleteError
from gpsolid.potential import fourier_transform, make_potential


def test_gaussian_is_never_unstable(gaussian):
    mu, k0 = instability_threshold(gaussian)
    assert math.isinf(mu) and k0 is None


def test_vdw_threshold(vdw):
    mu, k0 = instability_threshold(vdw)
    k = np.linspace(0.01, 15, 6000)
    w = fourier_transform(vdw, k)
    w0 = fourier_transform(vdw, 0.0)
    neg = w < 0
    brute = np.min(k[neg] ** 2 * w0 / (-2 * w[neg]))
    assert mu <= brute + 1e-9
    assert mu == pytest.approx(brute, rel=1e-4)
    assert fourier_transform(vdw, k0) < 0


def test_step_threshold():
    # w_hat = sqrt(2/pi) sin k / k; the ratio is -k^3 / (2 sin k)
    mu, k0 = instability_threshold(make_potential("step"))
    k = np.linspace(3.2, 6.2, 30001)
    assert mu == pytest.approx(np.min(-(k**3) / (2 * np.sin(k))), rel=1e-6)


def test_scan_incomplete(vdw):
    with pytest.raises(ScanIncompleteError):
        instability_threshold(vdw, np.linspace(0.1, 3.5, 100))


def test_radial_bound_closed_form(vdw):
    # mu_1 = int w / int x^2 w = 2 for vdw in 1D
    assert mu_one(vdw) == pytest.approx(2.0, rel=1e-9)
    assert lower_bound_radial(vdw) == pytest.approx(math.sqrt(5) - 1, abs=1e-9)


def test_nonneg_bound_needs_nonneg_tail():
    tlj = make_potential("truncated-lennard-jones")
    assert lower_bound_nonneg(tlj) is None


def test_general_bound_positive(vdw, gaussian):
    for p in (vdw, gaussian):
        v, alpha = lower_bound_general(p)
        assert v > 0 and alpha > 0


def test_pure_contact_report():
    p = make_potential("pure-contact")
    rep = criticality_report(p)
    assert math.isinf(rep.mu_star)
    assert rep.pohozaev_margin == pytest.approx(2 / fourier_transform(p, 0.0), rel=1e-6)


def test_pohozaev_gaussian(gaussian):
    assert pohozaev_margin(gaussian) > 0


@pytest.mark.parametrize("family", ["vdw", "gaussian", "step"])
def test_bound_ordering(family):
    rep = criticality_report(make_potential(family))
    assert rep.ordering_holds()
    for v in rep.lower_bounds().values():
        if v is not None:
            assert v <= rep.mu_star


def test_report_rows(vdw):
    rows = criticality_report(vdw).rows()
    names = [r[0] for r in rows]
    assert names[0] == "mu_star" and "lower_bound_radial" in names
    assert all(len(r) == 4 for r in rows)
