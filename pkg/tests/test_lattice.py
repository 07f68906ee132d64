import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpsolid.lattice import (
    Field,
    Grid,
    discretization,
    energy,
    export_text,
    free_energy,
    gp_gradient,
    gp_residual,
    interaction_field,
    laplacian_apply,
    make_grid,
    read_snapshot,
    write_snapshot,
)
from gpsolid.potential import make_potential

BCS = ("dirichlet", "neumann")


def _random_field(grid, rng, complex_):
    u = rng.normal(size=grid.shape) + 0.5
    if complex_:
        u = u + 1j * rng.normal(size=grid.shape)
    return u


@pytest.mark.parametrize("bc", BCS)
@pytest.mark.parametrize("complex_", [False, True], ids=["real", "complex"])
def test_gradient_matches_central_differences(vdw, bc, complex_):
    grid = make_grid(6.0, 0.1, bc)
    disc = discretization(grid, vdw)
    rng = np.random.default_rng(7 + complex_ + 2 * (bc == "neumann"))
    mu = 3.0
    worst = 0.0
    for _ in range(20):
        u = _random_field(grid, rng, complex_)
        d = _random_field(grid, rng, complex_)
        g = disc.gradient(u, mu)
        exact = disc.inner(g, d)
        t = 1e-5
        fd = (disc.free_energy(u + t * d, mu) - disc.free_energy(u - t * d, mu)) / (2 * t)
        worst = max(worst, abs(fd - exact) / abs(exact))
    assert worst < 1e-6


@pytest.mark.parametrize("bc", BCS)
def test_gradient_2d_masked(gaussian2d, bc, rng):
    base = make_grid((3.0, 3.0), 0.25, bc)
    x, y = base.coordinates()
    grid = Grid(2, (3.0, 3.0), 0.25, bc, mask=(x - 1.5) ** 2 + (y - 1.5) ** 2 < 1.4**2)
    disc = discretization(grid, gaussian2d)
    for _ in range(5):
        u = _random_field(grid, rng, True) * grid.active
        d = _random_field(grid, rng, True) * grid.active
        exact = disc.inner(disc.gradient(u, 1.0), d)
        t = 1e-5
        fd = (disc.free_energy(u + t * d, 1.0) - disc.free_energy(u - t * d, 1.0)) / (2 * t)
        assert abs(fd - exact) < 1e-6 * abs(exact)


def test_line_polynomial_is_exact(vdw, rng):
    grid = make_grid(5.0, 0.05, "neumann")
    disc = discretization(grid, vdw)
    u, d = rng.normal(size=grid.shape), rng.normal(size=grid.shape)
    c = disc.line_polynomial(u, d, 2.0, 0.0, disc.apply_w(disc.sigma(u)))
    for t in (0.1, -0.7, 1.3):
        inc = disc.free_energy(u + t * d, 2.0) - disc.free_energy(u, 2.0)
        assert inc == pytest.approx(sum(c[i] * t ** (i + 1) for i in range(4)), rel=1e-10, abs=1e-9)


@pytest.mark.parametrize("bc", BCS)
@pytest.mark.parametrize("dim", [1, 2])
def test_fft_matches_direct(bc, dim, rng):
    p = make_potential("vdw", dim=dim)
    grid = make_grid((4.0,) * dim, 0.2 if dim == 2 else 0.05, bc)
    rho = Field(grid, rng.uniform(0, 3, grid.shape))
    a = interaction_field(p, rho, "fft").values
    b = interaction_field(p, rho, "direct").values
    assert np.max(np.abs(a - b)) < 1e-10


@given(arrays(np.float64, 64, elements=st.floats(0, 100)))
@settings(max_examples=25, deadline=None)
def test_fft_matches_direct_property(rho):
    p = make_potential("gaussian", {"sigma": 0.3})
    grid = make_grid(3.2, 0.05, "neumann")
    f = Field(grid, rho)
    a = interaction_field(p, f, "fft").values
    b = interaction_field(p, f, "direct").values
    assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, float(np.max(np.abs(b))))


def test_interaction_rejects_negative_density(vdw):
    grid = make_grid(2.0, 0.1)
    with pytest.raises(ValueError):
        interaction_field(vdw, Field(grid, -np.ones(grid.shape)))


@given(st.floats(0, 2 * math.pi))
@settings(max_examples=20, deadline=None)
def test_global_phase_invariance(theta):
    p = make_potential("gaussian")
    grid = make_grid(4.0, 0.1, "dirichlet")
    u = np.sin(grid.axis(0)) + 1.5
    f, g = Field(grid, u), Field(grid, u * np.exp(1j * theta))
    assert free_energy(g, p, 1.3) == pytest.approx(free_energy(f, p, 1.3), rel=1e-12)


def test_constant_field_energy_neumann(gaussian):
    # no kinetic energy; interaction equals the discrete double sum
    grid = make_grid(10.0, 0.1, "neumann")
    f = Field(grid, np.full(grid.shape, 2.0))
    disc = discretization(grid, gaussian)
    assert disc.kinetic(f.values) == 0.0
    wr = disc.apply_w(np.full(grid.shape, 4.0))
    assert energy(f, gaussian) == pytest.approx(0.5 * 0.1 * np.sum(4.0 * wr))


def test_laplacian_of_sine_dirichlet():
    grid = make_grid(math.pi, math.pi / 200, "dirichlet")
    x = grid.axis(0)
    lap = laplacian_apply(Field(grid, np.sin(x))).values
    assert np.max(np.abs(lap + np.sin(x))) < 1e-4


def test_laplacian_neumann_kills_constants():
    grid = make_grid((2.0, 3.0), 0.1, "neumann")
    lap = laplacian_apply(Field(grid, np.full(grid.shape, 5.0))).values
    assert np.max(np.abs(lap)) < 1e-9


def test_residual_zero_at_fluid_neumann(gaussian):
    from gpsolid.potential import integral

    grid = make_grid(8.0, 0.1, "neumann")
    mu = 2.0
    disc = discretization(grid, gaussian)
    # discrete fluid: w_h * |u|^2 = mu at every node requires solving; use the gradient identity instead
    u = np.full(grid.shape, math.sqrt(mu / integral(gaussian)))
    g = gp_gradient(Field(grid, u), gaussian, mu).values
    assert np.allclose(g, 2 * disc.gp_operator(u, mu))
    assert gp_residual(Field(grid, u), gaussian, mu) == pytest.approx(np.max(np.abs(g)) / 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(1.0, 0.3)
    with pytest.raises(ValueError):
        make_grid(1.0, 0.1, "periodic")
    with pytest.raises(ValueError):
        Grid(3, (1.0, 1.0, 1.0), 0.1)
    g = make_grid(1.0, 0.1)
    assert g.shape == (9,)
    assert make_grid(1.0, 0.1, "neumann").shape == (10,)


def test_field_rejects_nan():
    g = make_grid(1.0, 0.1)
    with pytest.raises(ValueError):
        Field(g, np.full(g.shape, np.nan))


@pytest.mark.parametrize("complex_", [False, True])
@pytest.mark.parametrize("masked", [False, True])
def test_snapshot_round_trip(tmp_path, rng, complex_, masked):
    grid = make_grid((2.0, 1.5), 0.25, "neumann", origin=(-1.0, 0.5))
    if masked:
        mask = np.ones(grid.shape, dtype=bool)
        mask[0, 0] = False
        grid = Grid(2, grid.extents, grid.h, grid.bc, grid.origin, mask)
    f = Field(grid, _random_field(grid, rng, complex_))
    path = write_snapshot(tmp_path / "f.gpsf", f)
    g, tag = read_snapshot(path)
    assert tag == f.scalar_type
    assert np.array_equal(g.values, f.values)
    assert g.grid.extents == grid.extents and g.grid.origin == grid.origin and g.grid.h == grid.h
    assert g.grid.bc == grid.bc
    assert (g.grid.mask is None) == (not masked)
    if masked:
        assert np.array_equal(g.grid.mask, grid.mask)


def test_snapshot_measure_tag_and_text(tmp_path):
    grid = make_grid(1.0, 0.25, "neumann")
    f = Field(grid, np.arange(4.0))
    _, tag = read_snapshot(write_snapshot(tmp_path / "m.gpsf", f, tag="measure"))
    assert tag == "measure"
    data = np.loadtxt(export_text(tmp_path / "m.txt", f))
    assert data.shape == (4, 2) and np.array_equal(data[:, 1], np.arange(4.0))


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.gpsf"
    p.write_bytes(b"nope" + bytes(40))
    with pytest.raises(ValueError):
        read_snapshot(p)
