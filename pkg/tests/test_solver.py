import math
import warnings

import numpy as np
import pytest

from gpsolid.errors import StabilityError
from gpsolid.lattice import discretization, make_grid, write_snapshot
from gpsolid.potential import energy_lower_bound, integral, make_potential
from gpsolid.solver import (
    MinimizeOptions,
    constant_candidate,
    minimize_canonical,
    minimize_grand_canonical,
    seed_fields,
    solve_vortex_disk,
    vortex_setup,
)


def _check_run(p, mu, grid, res):
    bound = energy_lower_bound(p, mu, grid.smeared_volume(p.r))
    assert res.free_energy >= bound
    h = res.history
    assert h.size >= 1
    assert np.all(np.diff(h) <= 0)
    assert res.free_energy == pytest.approx(h[-1], rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
@pytest.mark.parametrize("mu", [0.5, 5.0])
def test_gaussian_grand_canonical(gaussian, bc, mu):
    grid = make_grid(20.0, 0.05, bc)
    res = minimize_grand_canonical(gaussian, mu, grid)
    assert res.converged
    _check_run(gaussian, mu, grid, res)
    f_cnst = -(mu**2) / (2 * integral(gaussian))
    # the wall layer costs energy under Dirichlet and saves some under Neumann
    fL = res.free_energy / grid.volume
    if bc == "dirichlet":
        assert f_cnst < fL < 0
    else:
        assert fL <= f_cnst * (1 - 1e-3)


def test_every_seed_descends_monotonically(vdw):
    grid = make_grid(20.0, 0.02)
    res = minimize_grand_canonical(vdw, 120.0, grid)
    _check_run(vdw, 120.0, grid, res)
    assert len(res.candidates) == 5
    for c in res.candidates:
        assert c.free_energy >= res.free_energy - 1e-9 * abs(res.free_energy)


def test_solid_has_single_sign(vdw):
    grid = make_grid(20.0, 0.02)
    res = minimize_grand_canonical(vdw, 120.0, grid)
    u = res.field.values
    assert np.all(u >= -1e-8 * np.max(np.abs(u))) or np.all(u <= 1e-8 * np.max(np.abs(u)))


def test_zero_mu_gives_zero_field(gaussian):
    res = minimize_grand_canonical(gaussian, 0.0, make_grid(4.0, 0.1))
    assert res.mass == pytest.approx(0.0, abs=1e-12)


def test_canonical_recovers_multiplier(gaussian):
    grid = make_grid(10.0, 0.05, "neumann")
    mu = 3.0
    g = minimize_grand_canonical(gaussian, mu, grid)
    c = minimize_canonical(gaussian, g.mass, grid)
    assert c.converged
    assert c.mass == pytest.approx(g.mass, rel=1e-10)
    assert c.multiplier == pytest.approx(mu, rel=1e-6)
    assert c.energy == pytest.approx(g.energy, rel=1e-7)
    assert np.all(np.diff(c.history) <= 0)


def test_stability_refusal():
    tlj = make_potential("truncated-lennard-jones")
    grid = make_grid(4.0, 0.05)
    with pytest.raises(StabilityError):
        minimize_grand_canonical(tlj, 1.0, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize_grand_canonical(tlj, 1.0, grid, MinimizeOptions(allow_indeterminate=True, multistart=1))
    assert math.isfinite(res.free_energy)


def test_constant_candidate(vdw):
    grid = make_grid(4.0, 0.1, "neumann")
    u = constant_candidate(vdw, 2.0, grid).values
    assert np.allclose(u, math.sqrt(2.0 / integral(vdw)))


def test_seed_strategies(vdw, tmp_path):
    grid = make_grid(8.0, 0.02)
    seeds = seed_fields(vdw, 90.0, grid, MinimizeOptions())
    labels = [s[0] for s in seeds]
    assert labels[0] == "constant" and len(labels) == 5
    rnd = seed_fields(vdw, 90.0, grid, MinimizeOptions(seeds="random", multistart=2, rng_seed=3))
    again = seed_fields(vdw, 90.0, grid, MinimizeOptions(seeds="random", multistart=2, rng_seed=3))
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(rnd, again))
    from gpsolid.lattice import Field

    path = write_snapshot(tmp_path / "s.gpsf", Field(grid, np.ones(grid.shape)))
    fs = seed_fields(vdw, 90.0, grid, MinimizeOptions(seeds="file", seed_file=str(path)))
    assert any(np.array_equal(s[1], np.ones(grid.shape)) for s in fs)


@pytest.mark.parametrize(
    "kw", [{"grad_tol": 0}, {"shrink": 1.5}, {"seeds": "magic"}, {"seeds": "file"}, {"max_iters": 0}]
)
def test_options_validation(kw):
    with pytest.raises(ValueError):
        MinimizeOptions(**kw)


def test_vortex_disk(gaussian2d):
    mu, L = 4.0, 6.0
    res = solve_vortex_disk(gaussian2d, mu, L)
    vs = vortex_setup(gaussian2d, mu, L)
    assert res.converged
    u = res.field.values
    assert np.max(np.abs(u[vs.ring] - vs.boundary_values[vs.ring])) == 0.0
    assert np.all(u[~vs.grid.active] == 0)
    assert np.all(np.diff(res.history) <= 0)
    disc = discretization(vs.grid, gaussian2d)
    assert res.energy == pytest.approx(disc.energy(u, vs.rho), rel=1e-12)


def test_vortex_needs_2d(vdw):
    with pytest.raises(ValueError):
        solve_vortex_disk(vdw, 1.0, 3.0)
