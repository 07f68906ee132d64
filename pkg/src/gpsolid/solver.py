"""Minimizers for the discrete grand-canonical, canonical and vortex problems.

All three share one preconditioned L-BFGS loop. Energies are quartic along
lines, so every step uses the exact increment of the objective instead of a
difference of two large numbers; this keeps descent monotone down to
round-off and makes tight residual targets reachable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .criticality import instability_threshold
from .errors import EnergyBoundViolation, ScanIncompleteError, StabilityError
from .lattice import Discretization, Field, Grid, discretization, read_snapshot
from .potential import Potential, Stability, energy_lower_bound, integral, stability_check

SEED_STRATEGIES = ("constant", "constant+cosine", "random", "file")


@dataclass(frozen=True)
class MinimizeOptions:
    """Iteration limits, stopping rule and seeding for the minimizers.

    ``grad_tol`` bounds the sup-norm of the GP residual relative to
    ``max(1, mu)``. ``multistart`` is the number of cosine or random seeds
    tried in addition to the constant one.
    """

    max_iters: int = 20000
    grad_tol: float = 1e-6
    c1: float = 1e-4
    shrink: float = 0.5
    seeds: str = "constant+cosine"
    multistart: int = 4
    rng_seed: int = 0
    seed_file: str | None = None
    amplitude: float = 0.5
    memory: int = 10
    stall_window: int = 10
    stall_rtol: float = 1e-12
    allow_indeterminate: bool = False
    k0: float | None = None

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.stall_rtol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.seeds not in SEED_STRATEGIES:
            raise ValueError(f"seed strategy must be one of {SEED_STRATEGIES}")
        if self.seeds == "file" and not self.seed_file:
            raise ValueError("seed strategy 'file' needs seed_file")
        if self.max_iters < 1 or self.multistart < 0 or self.memory < 0 or self.stall_window < 1:
            raise ValueError("iteration counts must be positive")


@dataclass(frozen=True)
class SeedOutcome:
    label: str
    free_energy: float
    energy: float
    mass: float
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class MinimizationResult:
    field: Field
    energy: float
    free_energy: float
    mass: float
    multiplier: float
    residual: float
    iterations: int
    converged: bool
    seed: str = "constant"
    kind: str = "grand-canonical"
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    candidates: tuple[SeedOutcome, ...] = ()

    @property
    def mean_density(self) -> float:
        return self.mass / self.field.grid.volume


# --- problems -------------------------------------------------------------------

class _Problem:
    """Objective restricted to the free nodes, with exact line increments."""

    def __init__(self, disc: Discretization, free: np.ndarray, shift: float):
        self.disc = disc
        self.free = free
        self.shift = shift

    def inner(self, a, b) -> float:
        return self.disc.inner(a, b)

    def precondition(self, g):
        return self.disc.precondition(g, self.shift) * self.free

    def project(self, z, u):
        return z


class _GrandProblem(_Problem):
    """``F(u) = E(u; background) - mu M(u)``."""

    def __init__(self, disc, free, mu: float, background: float = 0.0, mass_term: float | None = None):
        extent = max(disc.grid.extents)
        super().__init__(disc, free, max(2.0 * mu, (math.pi / extent) ** 2))
        self.mu = mu
        self.background = background
        # coefficient of -M(u) in the objective (0 for the vortex functional)
        self.mass_term = mu if mass_term is None else mass_term

    def value(self, u) -> float:
        return self.disc.free_energy(u, self.mass_term, self.background)

    def gradient(self, u):
        ws = self.disc.apply_w(self.disc.sigma(u, self.background))
        op = self.disc.gp_operator(u, self.mass_term, self.background, ws) * self.free
        return 2.0 * op, float(np.max(np.abs(op))) if op.size else 0.0, ws

    def line(self, u, d, ws):
        c = self.disc.line_polynomial(u, d, self.mass_term, self.background, ws)

        def inc(t):
            return t * (c[0] + t * (c[1] + t * (c[2] + t * c[3])))

        return inc, float(c[0]), _quartic_argmin(c)

    def advance(self, u, d, t):
        return u + t * d


class _SphereProblem(_Problem):
    """``E(u)`` on ``{M(u) = lam}`` with normalization as retraction."""

    def __init__(self, disc, free, lam: float, mu_guess: float):
        extent = max(disc.grid.extents)
        super().__init__(disc, free, max(2.0 * mu_guess, (math.pi / extent) ** 2))
        self.lam = lam
        self.mu_est = mu_guess

    def value(self, u) -> float:
        return self.disc.energy(u)

    def gradient(self, u):
        disc = self.disc
        ws = disc.apply_w(disc.sigma(u))
        hu = disc.gp_operator(u, 0.0, 0.0, ws)
        self.mu_est = disc.inner(u, hu) / disc.mass(u)
        op = (hu - self.mu_est * u) * self.free
        return 2.0 * op, float(np.max(np.abs(op))) if op.size else 0.0, ws

    def project(self, z, u):
        return z - (self.inner(u, z) / self.inner(u, u)) * u * self.free

    def line(self, u, d, ws):
        disc = self.disc
        kx = disc.kinetic_cross(u, d)
        kd = disc.kinetic(d)
        c = disc.line_polynomial(u, d, 0.0, 0.0, ws)
        i1, i2, i3, i4 = c[0] - 2 * kx, c[1] - kd, c[2], c[3]
        k0, i0 = disc.kinetic(u), disc.interaction(u, 0.0, ws)
        m0, ud, md = disc.mass(u), disc.inner(u, d), disc.mass(d)

        # increments are taken at the current mass; its round-off drift from
        # lam would otherwise add a t-independent offset
        def inc(t):
            dk = t * (2 * kx + t * kd)
            di = t * (i1 + t * (i2 + t * (i3 + t * i4)))
            mv = m0 + t * (2 * ud + t * md)
            s2m1 = -t * (2 * ud + t * md) / mv
            s4m1 = s2m1 * (s2m1 + 2.0)
            return s2m1 * (k0 + dk) + dk + s4m1 * (i0 + di) + di

        # the free energy at the current multiplier agrees to second order
        cf = disc.line_polynomial(u, d, self.mu_est, 0.0, ws)
        return inc, float(cf[0]), _quartic_argmin(cf)

    def advance(self, u, d, t):
        v = u + t * d
        return v * math.sqrt(self.lam / self.disc.mass(v))


def _quartic_argmin(c) -> float:
    """Smallest-value positive critical point of ``sum c_i t^i``; 1 if none."""
    roots = np.roots([4 * c[3], 3 * c[2], 2 * c[1], c[0]])
    real = roots[np.abs(roots.imag) <= 1e-10 * np.maximum(1.0, np.abs(roots))].real
    real = real[real > 0]
    if real.size == 0:
        return 1.0
    vals = real * (c[0] + real * (c[1] + real * (c[2] + real * c[3])))
    return float(real[np.argmin(vals)])


# --- L-BFGS loop --------------------------------------------------------------------

@dataclass
class _Descent:
    u: np.ndarray
    value: float
    residual: float
    iterations: int
    converged: bool
    history: np.ndarray


def _residual_scale(problem) -> float:
    if isinstance(problem, _SphereProblem):
        return max(1.0, abs(problem.mu_est))
    return max(1.0, problem.mu)


def _descend(problem, u0: np.ndarray, opts: MinimizeOptions) -> _Descent:
    u = np.array(u0 * problem.free)
    if isinstance(problem, _SphereProblem):
        u = problem.advance(u, np.zeros_like(u), 0.0)
    value = problem.value(u)
    history = [value]
    g, res, aux = problem.gradient(u)
    mem: list[tuple[np.ndarray, np.ndarray, float]] = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        if res <= opts.grad_tol * _residual_scale(problem) and _stalled(history, opts):
            converged = True
            it -= 1
            break
        d = _direction(problem, g, u, mem)
        inc, slope, t = problem.line(u, d, aux)
        if not slope < 0:
            mem.clear()
            d = -problem.project(problem.precondition(g), u)
            inc, slope, t = problem.line(u, d, aux)
            if not slope < 0:
                converged = res <= opts.grad_tol * _residual_scale(problem)
                break
        delta = inc(t)
        while not delta <= opts.c1 * t * slope:
            t *= opts.shrink
            if t < 1e-20:
                break
            delta = inc(t)
        if not delta <= 0 or t < 1e-20:
            # no decrease representable; the iterate is as good as it gets
            mem.clear()
            converged = res <= opts.grad_tol * _residual_scale(problem)
            break
        u_new = problem.advance(u, d, t)
        g_new, res, aux = problem.gradient(u_new)
        s = u_new - u
        y = g_new - problem.project(g, u_new)
        sy = problem.inner(s, y)
        if opts.memory and sy > 1e-12 * math.sqrt(problem.inner(s, s) * problem.inner(y, y)):
            mem.append((s, y, 1.0 / sy))
            if len(mem) > opts.memory:
                mem.pop(0)
        u, g = u_new, g_new
        value += delta
        history.append(value)
    return _Descent(u, problem.value(u), res, it, converged, np.asarray(history))


def _stalled(history: list[float], opts: MinimizeOptions) -> bool:
    if len(history) <= opts.stall_window:
        return len(history) > 1 and abs(history[-1] - history[0]) <= opts.stall_rtol * max(1.0, abs(history[-1]))
    ref = history[-1 - opts.stall_window]
    return abs(history[-1] - ref) <= opts.stall_rtol * max(1.0, abs(history[-1]))


def _direction(problem, g, u, mem):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * problem.inner(s, q)
        alphas.append(a)
        q = q - a * y
    r = problem.precondition(q)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * problem.inner(y, r)
        r = r + (a - b) * s
    return -problem.project(r, u)


# --- seeds ----------------------------------------------------------------------------

def constant_candidate(p: Potential, mu: float, grid: Grid) -> Field:
    """The fluid state ``(mu / int w)^{1/2}`` on the active nodes."""
    if mu < 0:
        raise ValueError("chemical potential must be non-negative")
    total = integral(p)
    if total <= 0:
        raise ValueError("the potential must have positive integral")
    return Field(grid, math.sqrt(mu / total) * grid.active.astype(float))


def _cosine_wavenumbers(p: Potential, grid: Grid, opts: MinimizeOptions) -> list[tuple[int, float]]:
    k0 = opts.k0
    if k0 is None:
        try:
            k0 = instability_threshold(p)[1]
        except ScanIncompleteError:
            k0 = None
    if k0 is None or opts.multistart == 0:
        return []
    L = grid.extents[0]
    n0 = max(1, int(round(L * k0 / (2 * math.pi))))
    out, step = [], 0
    while len(out) < opts.multistart:
        for n in ((n0 + step, n0 - step) if step else (n0,)):
            if n >= 1 and len(out) < opts.multistart and n not in [m for m, _ in out]:
                out.append((n, 2 * math.pi * n / L))
        step += 1
        if step > 10 * opts.multistart + n0:
            break
    return out


def seed_fields(p: Potential, mu: float, grid: Grid, opts: MinimizeOptions) -> list[tuple[str, np.ndarray]]:
    """Deterministic list of ``(label, values)`` starting points, constant first."""
    base = constant_candidate(p, mu, grid).values
    c = math.sqrt(mu / integral(p))
    seeds = [("constant", base)]
    x = grid.coordinates()[0] - grid.origin[0]
    if opts.seeds == "constant+cosine":
        for n, k in _cosine_wavenumbers(p, grid, opts):
            seeds.append((f"cosine-{n}", c * (1.0 + opts.amplitude * np.cos(k * x)) * grid.active))
    elif opts.seeds == "random":
        for i in range(opts.multistart):
            rng = np.random.default_rng([opts.rng_seed, i])
            noise = rng.uniform(-1.0, 1.0, grid.shape)
            seeds.append((f"random-{i}", c * (1.0 + opts.amplitude * noise) * grid.active))
    elif opts.seeds == "file":
        f, _ = read_snapshot(opts.seed_file)
        if f.grid.shape != grid.shape:
            raise ValueError("seed file grid does not match the requested grid")
        seeds.append(("file", np.real_if_close(f.values) * grid.active))
    return seeds


def _check_stability(p: Potential, opts: MinimizeOptions) -> Stability:
    st = stability_check(p)
    if st is Stability.INDETERMINATE and not opts.allow_indeterminate:
        raise StabilityError(
            "stability of the remainder could not be established; pass allow_indeterminate to proceed"
        )
    return st


def _pick(outcomes):
    """Lowest value wins; near-ties (1e-12 relative) keep the earlier seed."""
    best = 0
    for i in range(1, len(outcomes)):
        a, b = outcomes[i][1], outcomes[best][1]
        if a < b - 1e-12 * max(1.0, abs(b)):
            best = i
    return best


# --- public minimizers ----------------------------------------------------------------

def minimize_grand_canonical(
    p: Potential, mu: float, grid: Grid, opts: MinimizeOptions | None = None
) -> MinimizationResult:
    """Minimize ``E - mu M`` over real fields on ``grid`` from several seeds."""
    opts = opts or MinimizeOptions()
    stab = _check_stability(p, opts)
    disc = discretization(grid, p)
    problem = _GrandProblem(disc, grid.active.astype(float), mu)
    runs = []
    for label, u0 in seed_fields(p, mu, grid, opts):
        runs.append((label, _descend(problem, u0, opts)))
    ranked = [(label, r.value) for label, r in runs]
    label, best = runs[_pick(ranked)]
    result = _finish(disc, best, mu, label, "grand-canonical", runs, mu)
    bound = energy_lower_bound(p, mu, grid.smeared_volume(p.r))
    if result.free_energy < bound - 1e-9 * abs(bound):
        msg = f"free energy {result.free_energy:.6g} below the lower bound {bound:.6g}"
        if stab is Stability.STABLE_SUFFICIENT:
            raise EnergyBoundViolation(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result


def minimize_canonical(
    p: Potential, lam: float, grid: Grid, opts: MinimizeOptions | None = None
) -> MinimizationResult:
    """Minimize ``E`` at fixed mass ``lam``; the multiplier is a Rayleigh quotient."""
    if not lam > 0:
        raise ValueError("mass must be positive")
    opts = opts or MinimizeOptions()
    _check_stability(p, opts)
    disc = discretization(grid, p)
    free = grid.active.astype(float)
    mu_guess = integral(p) * lam / grid.volume
    runs = []
    for label, u0 in seed_fields(p, mu_guess, grid, opts):
        if not np.any(u0):
            u0 = free.copy()
        problem = _SphereProblem(disc, free, lam, mu_guess)
        runs.append((label, _descend(problem, u0, opts), problem.mu_est))
    label, best, mu_est = runs[_pick([(lb, r.value) for lb, r, _ in runs])]
    return _finish(disc, best, mu_est, label, "canonical", [(lb, r) for lb, r, _ in runs], 0.0)


def _finish(disc, run: _Descent, multiplier, label, kind, runs, mu_term, background=0.0):
    u = run.u
    energy = disc.energy(u, background)
    mass = disc.mass(u)
    return MinimizationResult(
        field=Field(disc.grid, u),
        energy=energy,
        free_energy=energy - mu_term * mass,
        mass=mass,
        multiplier=float(multiplier),
        residual=run.residual,
        iterations=run.iterations,
        converged=run.converged,
        seed=label,
        kind=kind,
        history=run.history,
        candidates=tuple(
            SeedOutcome(
                lb, r.value, disc.energy(r.u, background), disc.mass(r.u), r.residual, r.iterations, r.converged
            )
            for lb, r in runs
        ),
    )


# --- vortex ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class VortexSetup:
    grid: Grid
    free: np.ndarray
    ring: np.ndarray
    boundary_values: np.ndarray
    rho: float
    radius: float


def vortex_setup(p: Potential, mu: float, L: float, cells: int = 32) -> VortexSetup:
    """Disk of radius ``L`` in a Dirichlet box; the outer ring holds ``g``."""
    if p.dim != 2:
        raise ValueError("the vortex problem is two-dimensional")
    h = L / cells
    ext = 2 * L + 4 * h
    box = Grid(dim=2, extents=(ext, ext), h=h, bc="dirichlet", origin=(-L - 2 * h, -L - 2 * h))
    x, y = box.coordinates()
    r = np.hypot(x, y)
    active = r <= L + 1e-12 * L
    free = r < L - h
    grid = replace(box, mask=active)
    rho = mu / integral(p)
    g = math.sqrt(rho) * (x + 1j * y) / L
    ring = active & ~free
    return VortexSetup(grid, free, ring, np.where(ring, g, 0.0), rho, L)


def solve_vortex_disk(
    p: Potential, mu: float, L: float, opts: MinimizeOptions | None = None, cells: int = 32
) -> MinimizationResult:
    """Minimize ``int |grad u|^2 + 1/2 (|u|^2 - rho) w (|u|^2 - rho)`` with ``u = g`` on the ring.

    ``rho = mu / int w`` and ``g = sqrt(rho) (x1 + i x2) / L``. The seed is
    ``g`` extended linearly into the disk.
    """
    opts = opts or MinimizeOptions()
    _check_stability(p, opts)
    mu_star = instability_threshold(p)[0]
    if mu >= mu_star:
        warnings.warn("mu is not below the instability threshold; the fluid vortex may not exist", RuntimeWarning, stacklevel=2)
    vs = vortex_setup(p, mu, L, cells)
    disc = discretization(vs.grid, p)
    problem = _GrandProblem(disc, vs.free.astype(float), mu, background=vs.rho, mass_term=0.0)
    x, y = vs.grid.coordinates()
    u0 = (math.sqrt(vs.rho) * (x + 1j * y) / L) * vs.grid.active
    u0 = np.where(vs.ring, vs.boundary_values, u0)
    # _descend keeps non-free entries fixed, so start from the clamped field
    run = _descend_clamped(problem, u0, opts)
    return _finish(disc, run, mu, "vortex", "vortex", [("vortex", run)], 0.0, background=vs.rho)


def _descend_clamped(problem: _GrandProblem, u0, opts) -> _Descent:
    fixed = u0 * (1 - problem.free)
    free_part = u0 * problem.free
    inner = _ShiftedProblem(problem, fixed)
    run = _descend(inner, free_part, opts)
    run.u = run.u + fixed
    return run


class _ShiftedProblem:
    """Wraps a problem so the optimizer sees only free values; ``fixed`` is added back."""

    def __init__(self, base: _GrandProblem, fixed):
        self.base = base
        self.fixed = fixed
        self.free = base.free
        self.mu = base.mu

    def inner(self, a, b):
        return self.base.inner(a, b)

    def precondition(self, g):
        return self.base.precondition(g)

    def project(self, z, u):
        return z

    def value(self, u):
        return self.base.value(u + self.fixed)

    def gradient(self, u):
        return self.base.gradient(u + self.fixed)

    def line(self, u, d, aux):
        return self.base.line(u + self.fixed, d, aux)

    def advance(self, u, d, t):
        return u + t * d
