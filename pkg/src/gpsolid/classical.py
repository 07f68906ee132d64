"""Classical mean-field limit: pure interaction energy of non-negative measures.

A measure is a vector of node weights ``nu_i >= 0`` (mass per node). The
objective ``1/2 sum_ij w(x_i - x_j) nu_i nu_j - mu sum_i nu_i`` is quadratic,
so minimizers at any ``mu`` are ``mu`` times minimizers at ``mu = 1``; only
the unit problem is solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criticality import instability_threshold
from .errors import InsufficientDataError, ScanIncompleteError
from .lattice import Field, Grid, discretization, make_grid
from .potential import Potential, integral

SCALING_RTOL = 1e-8


@dataclass(frozen=True)
class ClassicalMeasure:
    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.grid.shape:
            raise ValueError("weights do not match the grid")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def as_field(self) -> Field:
        """Density ``nu / h^d`` as a field (for snapshots with the measure tag)."""
        return Field(self.grid, self.weights / self.grid.cell_volume)


@dataclass(frozen=True)
class ClassicalOptions:
    max_iters: int = 50000
    tol: float = 1e-6
    multistart: int = 6
    rng_seed: int = 0

    def __post_init__(self):
        if not self.tol > 0 or self.max_iters < 1 or self.multistart < 0:
            raise ValueError("invalid classical solver options")


@dataclass(frozen=True)
class ClassicalResult:
    measure: ClassicalMeasure
    F: float
    mu: float
    converged: bool
    iterations: int
    kkt: float
    seed: str


class _Quadratic:
    def __init__(self, p: Potential, grid: Grid):
        self.disc = discretization(grid, p)
        self.dV = grid.cell_volume
        self.contact = p.contact
        self.active = grid.active
        self.lip = self._gershgorin(p, grid)

    def _gershgorin(self, p, grid) -> float:
        offs = [np.arange(-(n - 1), n) * grid.h for n in grid.shape]
        mesh = np.meshgrid(*offs, indexing="ij")
        dist = np.sqrt(sum(m * m for m in mesh))
        return float(np.sum(np.abs(p.tail(dist)))) + abs(self.contact) / self.dV if p.has_tail else abs(self.contact) / self.dV

    def apply(self, nu):
        """``(w * nu)_i = sum_j w(x_i - x_j) nu_j`` plus the contact diagonal."""
        return self.disc.convolve_tail(nu / self.dV) + self.contact * nu * self.active / self.dV

    def value(self, nu, mu, wnu=None) -> float:
        wnu = self.apply(nu) if wnu is None else wnu
        return 0.5 * float(np.sum(nu * wnu)) - mu * float(np.sum(nu))


def _fista(q: _Quadratic, nu0, opts: ClassicalOptions):
    """Accelerated projected gradient with step ``1/L`` and function-value restart."""
    step = 1.0 / q.lip
    x = np.maximum(nu0, 0.0) * q.active
    y, t = x.copy(), 1.0
    wx = q.apply(x)
    fx = q.value(x, 1.0, wx)
    kkt = _kkt(x, wx - 1.0, q.active)
    if kkt <= opts.tol:
        return x, fx, True, 0, kkt
    for it in range(1, opts.max_iters + 1):
        g = q.apply(y) - 1.0
        x_new = np.maximum(y - step * g, 0.0) * q.active
        w_new = q.apply(x_new)
        f_new = q.value(x_new, 1.0, w_new)
        if f_new > fx:
            # momentum overshot: restart from the last accepted point
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, wx, fx, t = x_new, w_new, f_new, t_new
        if it % 10 == 0:
            kkt = _kkt(x, wx - 1.0, q.active)
            if kkt <= opts.tol:
                return x, fx, True, it, kkt
    kkt = _kkt(x, wx - 1.0, q.active)
    return x, fx, kkt <= opts.tol, opts.max_iters, kkt


def _kkt(nu, grad, active) -> float:
    """Sup-norm of the projected gradient at unit chemical potential."""
    pg = np.where(nu > 0, grad, np.minimum(grad, 0.0)) * active
    return float(np.max(np.abs(pg)))


def _seeds(p: Potential, grid: Grid, opts: ClassicalOptions):
    dV = grid.cell_volume
    uniform = grid.active * dV / integral(p)
    seeds = [("uniform", uniform)]
    x = grid.coordinates()[0] - grid.origin[0]
    try:
        k0 = instability_threshold(p)[1]
    except ScanIncompleteError:
        k0 = None
    if k0 is None:
        # w_hat >= 0 makes the problem convex: one start suffices
        return seeds
    if k0:
        # combs with spacings bracketing the instability wavelength
        ncomb = max(opts.multistart - 2, 1)
        for a in (2 * math.pi / k0) * np.linspace(0.7, 1.1, ncomb):
            s = max(2, int(round(a / grid.h)))
            idx = np.round(x / grid.h).astype(int)
            comb = ((idx % s) == s // 2) * grid.active * float(s) * dV / integral(p)
            seeds.append((f"comb-{s}", comb))
    rng = np.random.default_rng(opts.rng_seed)
    for i in range(opts.multistart - len(seeds) + 1):
        seeds.append((f"random-{i}", uniform * rng.uniform(0.0, 2.0, grid.shape)))
    return seeds


def minimize_classical(p: Potential, mu: float, grid: Grid, opts: ClassicalOptions | None = None) -> ClassicalResult:
    """Lowest ``F_cl`` over node measures; solved at ``mu = 1`` and rescaled.

    The rescaling is checked by re-evaluating the objective at ``mu``.
    """
    if not mu > 0:
        raise ValueError("chemical potential must be positive")
    opts = opts or ClassicalOptions()
    q = _Quadratic(p, grid)
    best = None
    for label, nu0 in _seeds(p, grid, opts):
        x, fx, conv, it, kkt = _fista(q, nu0, opts)
        if best is None or fx < best[1] - 1e-12 * max(1.0, abs(best[1])):
            best = (x, fx, conv, it, kkt, label)
    x, f1, conv, it, kkt, label = best
    nu = mu * x
    F = q.value(nu, mu)
    if abs(F - mu * mu * f1) > SCALING_RTOL * max(1.0, abs(F)):
        raise AssertionError(f"quadratic scaling violated: {F!r} vs {mu * mu * f1!r}")
    return ClassicalResult(ClassicalMeasure(grid, nu), F, mu, conv, it, kkt * mu, label)


# --- thermodynamic constant -----------------------------------------------------------

@dataclass(frozen=True)
class EclEstimate:
    value: float
    uncertainty: float
    f_cl: float
    per_volume: dict
    results: dict = field(default_factory=dict, repr=False)


def e_cl_estimate(
    p: Potential, L_list, h: float = 0.05, bc: str = "neumann", opts: ClassicalOptions | None = None
) -> EclEstimate:
    """``e_cl = -1/(4 f_cl)`` with ``f_cl`` the ``1/L`` limit of ``F_cl(1)/|Omega|``."""
    L_list = sorted(float(L) for L in L_list)
    if len(L_list) < 3:
        raise InsufficientDataError("need at least three box sizes")
    per, results = {}, {}
    for L in L_list:
        grid = make_grid(L, h, bc, dim=p.dim)
        results[L] = minimize_classical(p, 1.0, grid, opts)
        per[L] = results[L].F / grid.volume
    L = np.array(L_list)
    y = np.array([per[v] for v in L_list])
    X = np.stack([np.ones_like(L), 1 / L], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    drop, *_ = np.linalg.lstsq(X[1:], y[1:], rcond=None)
    f_cl = float(coef[0])
    df = float(np.max(np.abs(X @ coef - y))) + abs(float(drop[0]) - f_cl)
    if f_cl >= 0:
        raise ArithmeticError("extrapolated classical free energy is not negative")
    e = -1.0 / (4 * f_cl)
    unc = e * df / abs(f_cl)
    if not 0 < e <= integral(p) / 2 * (1 + 1e-3) + unc:
        raise AssertionError(f"e_cl={e:.6g} outside (0, int w / 2]")
    return EclEstimate(e, unc, f_cl, per, results)


# --- optimality --------------------------------------------------------------------------

@dataclass(frozen=True)
class EulerLagrangeReport:
    global_min: float
    global_worst: tuple[int, ...]
    support_dev: float
    support_worst: tuple[int, ...] | None
    tol: float

    @property
    def global_ok(self) -> bool:
        return self.global_min >= -self.tol

    @property
    def support_ok(self) -> bool:
        return self.support_dev <= self.tol

    @property
    def passes(self) -> bool:
        return self.global_ok and self.support_ok


def euler_lagrange_check(
    measure: ClassicalMeasure, p: Potential, mu: float, tol: float | None = None, margin: float | None = None
) -> EulerLagrangeReport:
    """``w * nu >= mu`` everywhere and ``= mu`` on the support, away from the walls."""
    g = measure.grid
    q = _Quadratic(p, g)
    pot = q.apply(measure.weights) - mu
    margin = g.interior_margin() if margin is None else margin
    inner = np.ones(g.shape, dtype=bool)
    for i in range(g.dim):
        x = g.axis(i) - g.origin[i]
        sel = (x >= margin) & (x <= g.extents[i] - margin)
        shape = [1] * g.dim
        shape[i] = -1
        inner &= sel.reshape(shape)
    inner &= g.active
    tol = 1e-5 * mu if tol is None else tol
    vals = np.where(inner, pot, np.inf)
    gi = np.unravel_index(int(np.argmin(vals)), g.shape)
    nu = measure.weights
    supp = inner & (nu > 1e-8 * max(float(nu.max()), 1e-300))
    if np.any(supp):
        dev = np.where(supp, np.abs(pot), -np.inf)
        si = np.unravel_index(int(np.argmax(dev)), g.shape)
        sdev = float(dev[si])
        sworst = tuple(int(v) for v in si)
    else:
        sdev, sworst = 0.0, None
    return EulerLagrangeReport(float(vals[gi]), tuple(int(v) for v in gi), sdev, sworst, tol)


# --- high density ------------------------------------------------------------------------

@dataclass(frozen=True)
class HighDensityRow:
    mu: float
    f_over_mu2: float
    target: float
    deviation: float
    density_distance: float
    box_target: float
    box_deviation: float


def high_density_consistency(p: Potential, mu_list, grid: Grid, e_cl: float, solver_opts=None, opts=None):
    """Compare ``f(mu)/mu^2`` with ``-1/(4 e_cl)`` and GP versus classical shapes.

    ``box_target`` is the classical value of the same box, the single-box
    limit of ``f(mu)/mu^2``; ``target`` is only reached as the box grows too.
    """
    from .solver import minimize_grand_canonical

    cl = minimize_classical(p, 1.0, grid, opts)
    nu1 = cl.measure.weights / grid.cell_volume
    rows = []
    for mu in mu_list:
        res = minimize_grand_canonical(p, mu, grid, solver_opts)
        f = res.free_energy / grid.volume
        target = -1.0 / (4 * e_cl)
        dens = res.field.density / mu
        dist = float(np.sum(np.abs(dens - nu1))) * grid.cell_volume
        box = cl.F / grid.volume
        rows.append(
            HighDensityRow(float(mu), f / mu**2, target, abs(f / mu**2 - target), dist, box, abs(f / mu**2 - box))
        )
    return rows
