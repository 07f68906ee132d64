"""Thermodynamic functions from finite-box sweeps.

Per-volume free energies ``f_L`` from Dirichlet and Neumann boxes are
extrapolated in ``1/L``; the two boundary conditions share the same limit,
so the gap between their extrapolations serves as the uncertainty. The
critical chemical potential is bracketed by the first grid point where the
extrapolated free energy drops below the constant-state value by more than
that uncertainty.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .criticality import instability_threshold
from .errors import InsufficientDataError, ScanIncompleteError
from .lattice import make_grid
from .potential import Potential, integral
from .solver import MinimizeOptions, minimize_grand_canonical

BRANCHES = ("fluid-seed", "solid-seed")
LOW_CONFIDENCE_GAP = 0.05
UNCERTAINTY_FLOOR = 1e-9


@dataclass(frozen=True)
class ThermoSample:
    mu: float
    L: float
    bc: str
    branch: str
    f: float
    rho: float
    e: float
    converged: bool = True
    residual: float = 0.0


def _cell(args) -> list[ThermoSample]:
    p, mu, L, bc, h, opts = args
    grid = make_grid(float(L), h, bc)
    if mu == 0:
        return [ThermoSample(0.0, L, bc, b, 0.0, 0.0, 0.0) for b in BRANCHES]
    res = minimize_grand_canonical(p, mu, grid, opts)
    vol = grid.volume
    out = []
    for branch in BRANCHES:
        cands = [c for c in res.candidates if (c.label == "constant") == (branch == "fluid-seed")]
        if not cands:
            continue
        best = min(cands, key=lambda c: c.free_energy)
        out.append(
            ThermoSample(
                mu=float(mu),
                L=float(L),
                bc=bc,
                branch=branch,
                f=(best.energy - mu * best.mass) / vol,
                rho=best.mass / vol,
                e=best.energy / vol,
                converged=best.converged,
                residual=best.residual,
            )
        )
    return out


def default_spacing(p: Potential) -> float:
    """0.02, or finer if needed to put 12 nodes per instability wavelength."""
    try:
        k0 = instability_threshold(p)[1]
    except ScanIncompleteError:
        k0 = None
    h = 0.02
    if k0:
        h = min(h, 2 * math.pi / k0 / 12)
    return h


def sweep(
    p: Potential,
    mu_list,
    L_list,
    bc_list=("dirichlet", "neumann"),
    opts: MinimizeOptions | None = None,
    h: float | None = None,
    jobs: int = 1,
) -> list[ThermoSample]:
    """One sample per (mu, L, bc, branch); cells run in a process pool."""
    opts = opts or MinimizeOptions()
    try:
        k0 = instability_threshold(p)[1]
    except ScanIncompleteError:
        k0 = None
    h = default_spacing(p) if h is None else h
    if k0 and h > 2 * math.pi / k0 / 12 * (1 + 1e-12):
        raise ValueError(f"h={h} does not resolve the instability wavelength 2pi/k0={2 * math.pi / k0:.4g}")
    if opts.k0 is None and k0:
        # spare each worker the Fourier scan
        opts = MinimizeOptions(**{**opts.__dict__, "k0": k0})
    tasks = [(p, float(mu), float(L), bc, h, opts) for mu in mu_list for L in L_list for bc in bc_list]
    if jobs == 1 or len(tasks) == 1:
        chunks = [_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_cell, tasks))
    return [s for chunk in chunks for s in chunk]


# --- extrapolation ------------------------------------------------------------------

def _fit_inverse_L(L: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Limit of ``y`` from ``y = f + a/L (+ b/L^2)`` and the max fit residual.

    Two points give the Richardson value with zero residual.
    """
    cols = [np.ones_like(L), 1 / L]
    if L.size >= 4:
        cols.append(1 / L**2)
    X = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.max(np.abs(X @ coef - y)))
    return float(coef[0]), resid


@dataclass
class ThermoCurve:
    mu: np.ndarray
    f: np.ndarray
    rho: np.ndarray
    uncertainty: np.ndarray
    rho_fd: np.ndarray
    low_confidence: np.ndarray
    integral_w: float
    branch_f: dict[str, np.ndarray] = field(default_factory=dict)
    samples: list[ThermoSample] = field(default_factory=list, repr=False)

    @property
    def f_cnst(self) -> np.ndarray:
        return -(self.mu**2) / (2 * self.integral_w)

    def checks(self, tol: float | None = None) -> dict[str, bool]:
        """Discrete monotonicity, concavity and constant-state comparisons."""
        unc = self.uncertainty
        tol = float(np.max(unc)) if tol is None else tol
        out = {"below_constant": bool(np.all(self.f <= self.f_cnst + unc))}
        if self.mu.size >= 2:
            out["decreasing"] = bool(np.all(np.diff(self.f) <= tol))
        if self.mu.size >= 3:
            out["concave"] = bool(np.all(_second_differences(self.mu, self.f) <= tol))
        return out


def _second_differences(x, y):
    """Divided second differences scaled by the local spacing."""
    d1 = np.diff(y) / np.diff(x)
    return np.diff(d1) * 0.5 * (x[2:] - x[:-2])


def _branch_min(samples):
    best = {}
    for s in samples:
        key = (s.mu, s.L, s.bc)
        if key not in best or s.f < best[key].f:
            best[key] = s
    return best


def extrapolate(samples: list[ThermoSample], integral_w: float) -> ThermoCurve:
    """Limit ``f(mu)`` and ``rho(mu)`` from at least three box sizes per mu."""
    if not samples:
        raise InsufficientDataError("no samples")
    best = _branch_min(samples)
    mus = sorted({s.mu for s in samples})
    bcs = sorted({s.bc for s in samples})
    f, rho, unc, low = [], [], [], []
    branch_f = {b: [] for b in BRANCHES}
    for mu in mus:
        fe, re_, res = {}, {}, []
        for bc in bcs:
            rows = sorted((s for (m, _, b), s in best.items() if m == mu and b == bc), key=lambda s: s.L)
            if len(rows) < 3:
                raise InsufficientDataError(f"mu={mu:g}, bc={bc}: need at least 3 box sizes, got {len(rows)}")
            L = np.array([s.L for s in rows])
            fL = np.array([s.f for s in rows])
            fe[bc], r1 = _fit_inverse_L(L, fL)
            # sensitivity to the smallest box catches slow near-critical convergence
            drop, _ = _fit_inverse_L(L[1:], fL[1:])
            re_[bc], _ = _fit_inverse_L(L, np.array([s.rho for s in rows]))
            res.append(r1 + abs(drop - fe[bc]))
        fv = list(fe.values())
        mid = 0.5 * (max(fv) + min(fv))
        gap = max(fv) - min(fv)
        f.append(mid)
        rho.append(float(np.mean(list(re_.values()))))
        unc.append(gap + max(res) + UNCERTAINTY_FLOOR * abs(mid))
        low.append(gap > LOW_CONFIDENCE_GAP * abs(mid))
        for b in BRANCHES:
            vals = []
            for bc in bcs:
                rows = sorted((s for s in samples if s.mu == mu and s.bc == bc and s.branch == b), key=lambda s: s.L)
                if len(rows) >= 3:
                    vals.append(_fit_inverse_L(np.array([s.L for s in rows]), np.array([s.f for s in rows]))[0])
            branch_f[b].append(float(np.mean(vals)) if vals else math.nan)
    mu_arr, f_arr = np.array(mus), np.array(f)
    rho_fd = -np.gradient(f_arr, mu_arr) if mu_arr.size >= 2 else np.full(1, math.nan)
    return ThermoCurve(
        mu=mu_arr,
        f=f_arr,
        rho=np.array(rho),
        uncertainty=np.array(unc),
        rho_fd=rho_fd,
        low_confidence=np.array(low),
        integral_w=integral_w,
        branch_f={b: np.array(v) for b, v in branch_f.items()},
        samples=list(samples),
    )


def branch_crossing(curve: ThermoCurve) -> float | None:
    """First mu where the solid-seed branch lies strictly below the fluid one."""
    fl, so = curve.branch_f.get("fluid-seed"), curve.branch_f.get("solid-seed")
    if fl is None or so is None:
        return None
    below = np.flatnonzero(so < fl - curve.uncertainty)
    return float(curve.mu[below[0]]) if below.size else None


# --- Legendre transform ------------------------------------------------------------

@dataclass(frozen=True)
class LegendreData:
    rho: np.ndarray
    e: np.ndarray
    mu_of_rho: np.ndarray


def legendre_energy(mu, f, rho_grid=None) -> LegendreData:
    """``e(rho) = max_mu (f(mu) + mu rho)`` over the sampled ``mu``."""
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    if rho_grid is None:
        # slopes of the sampled curve span the meaningful densities
        slopes = -np.diff(f) / np.diff(mu) if mu.size > 1 else np.zeros(1)
        rho_grid = np.unique(np.linspace(max(float(np.min(slopes)), 0.0), max(float(np.max(slopes)), 0.0), 4 * mu.size + 1))
    rho = np.asarray(rho_grid, dtype=float)
    table = f[None, :] + mu[None, :] * rho[:, None]
    idx = np.argmax(table, axis=1)
    return LegendreData(rho, table[np.arange(rho.size), idx], mu[idx])


def inverse_legendre(data: LegendreData, mu) -> np.ndarray:
    """``f(mu) = min_rho (e(rho) - mu rho)`` over the Legendre grid."""
    mu = np.asarray(mu, dtype=float)
    return np.min(data.e[None, :] - mu[:, None] * data.rho[None, :], axis=1)


# --- phase information --------------------------------------------------------------

@dataclass(frozen=True)
class PhaseInfo:
    rho: np.ndarray
    phi: np.ndarray
    bracket: tuple[float | None, float] | None
    mu_max: float
    dichotomy_consistent: bool
    rho_c: tuple[float, float] | None

    @property
    def label(self) -> str:
        if self.bracket is None:
            return f">= {self.mu_max:g}"
        lo, hi = self.bracket
        return f"[{'-inf' if lo is None else f'{lo:g}'}, {hi:g}]"


def detect_bracket(curve: ThermoCurve) -> tuple[tuple[float | None, float] | None, bool]:
    """First grid mu with ``f_cnst - f > uncertainty`` and the no-re-entry flag."""
    gain = curve.f_cnst - curve.f
    solid = gain > curve.uncertainty
    hits = np.flatnonzero(solid)
    if hits.size == 0:
        return None, True
    i = int(hits[0])
    lo = float(curve.mu[i - 1]) if i > 0 else None
    return (lo, float(curve.mu[i])), bool(np.all(solid[i:]))


def phi_and_mu_c(curve: ThermoCurve, integral_w: float | None = None, legendre: LegendreData | None = None) -> PhaseInfo:
    """``phi(rho) = e(rho)/rho - rho int w / 2`` and the critical bracket."""
    W = curve.integral_w if integral_w is None else integral_w
    leg = legendre or legendre_energy(curve.mu, curve.f)
    pos = leg.rho > 0
    rho = leg.rho[pos]
    phi = leg.e[pos] / rho - 0.5 * rho * W
    bracket, ok = detect_bracket(curve)
    rho_c = None
    if bracket is not None:
        lo, hi = bracket
        rho_c = ((lo if lo is not None else 0.0) / W, hi / W)
    return PhaseInfo(rho, phi, bracket, float(np.max(curve.mu)), ok, rho_c)


def refine_bracket(
    p: Potential,
    curve: ThermoCurve,
    L_list,
    bc_list=("dirichlet", "neumann"),
    opts: MinimizeOptions | None = None,
    h: float | None = None,
    max_extra: int = 6,
    jobs: int = 1,
) -> ThermoCurve:
    """Bisect the detected bracket with at most ``max_extra`` new mu values."""
    bracket, _ = detect_bracket(curve)
    if bracket is None or bracket[0] is None:
        return curve
    lo, hi = bracket
    samples = list(curve.samples)
    for _ in range(max_extra):
        mid = 0.5 * (lo + hi)
        new = sweep(p, [mid], L_list, bc_list, opts, h, jobs)
        samples.extend(new)
        point = extrapolate(new, curve.integral_w)
        if point.f_cnst[0] - point.f[0] > point.uncertainty[0]:
            hi = mid
        else:
            lo = mid
    return extrapolate(samples, curve.integral_w)


def kink_densities(mu, f) -> np.ndarray:
    """Chord slopes ``-(f_{i+1} - f_i)/(mu_{i+1} - mu_i)``: the kinks of the discrete ``e``."""
    return -np.diff(np.asarray(f, dtype=float)) / np.diff(np.asarray(mu, dtype=float))


def legendre_checks(curve: ThermoCurve, leg: LegendreData | None = None, tol: float = 1e-9) -> dict[str, bool]:
    """Convexity of ``e``, shape of ``e/rho`` and the bound ``mu(rho) <= rho int w``.

    ``e/rho`` is tested at the kink densities, where the discrete transform
    is exact; between kinks it inherits small convex corners from the grid.
    """
    leg = leg or legendre_energy(curve.mu, curve.f)
    scale = max(1.0, float(np.max(np.abs(leg.e))))
    out = {}
    if leg.rho.size >= 3:
        out["e_convex"] = bool(np.all(_second_differences(leg.rho, leg.e) >= -tol * scale))
    kinks = kink_densities(curve.mu, curve.f)
    kinks = kinks[kinks > 0]
    if kinks.size >= 3:
        at = legendre_energy(curve.mu, curve.f, kinks)
        q = at.e / at.rho
        out["e_over_rho_concave"] = bool(np.all(_second_differences(at.rho, q) <= tol * scale))
        out["e_over_rho_nondecreasing"] = bool(np.all(np.diff(q) >= -tol * scale))
    out["mu_below_fluid_line"] = bool(
        np.all(leg.mu_of_rho <= leg.rho * curve.integral_w + _max_step(curve.mu) + tol * scale)
    )
    return out


def _max_step(x) -> float:
    return float(np.max(np.diff(x))) if np.size(x) > 1 else 0.0


def thermo_curve(p: Potential, samples: list[ThermoSample]) -> ThermoCurve:
    return extrapolate(samples, integral(p))
