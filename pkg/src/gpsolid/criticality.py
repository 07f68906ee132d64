"""Closed-form bounds on the critical chemical potential.

All quantities are functionals of the radial Fourier profile ``w_hat`` on a
wavenumber scan. Ratios with a vanishing (or negative) denominator are set to
``+inf`` explicitly instead of relying on IEEE division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergentMomentError, ScanIncompleteError
from .potential import (
    Potential,
    fourier_profile,
    fourier_transform,
    moments,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
NONNEG_TOL = 1e-10


def _scan(p: Potential, kgrid) -> tuple[np.ndarray, np.ndarray, float]:
    prof = fourier_profile(p, kgrid)
    k, wk = prof.k, prof.values
    keep = k > 0
    w0 = float(fourier_transform(p, 0.0)) if kgrid is not None else prof.at_zero
    return k[keep], wk[keep], w0


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.full(np.shape(num), math.inf)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    return out


def _golden_min(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Minimize a unimodal scalar function on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(c)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _scan_minimum(k: np.ndarray, vals: np.ndarray, scalar_objective, refine: bool, what: str):
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        return math.inf, None
    if i == k.size - 1:
        raise ScanIncompleteError(
            f"{what}: scan minimum sits at k_max={k[-1]:.6g}; extend the wavenumber grid"
        )
    best_k, best = float(k[i]), float(vals[i])
    if refine:
        lo = float(k[i - 1]) if i > 0 else 0.5 * float(k[0])
        kk, vv = _golden_min(scalar_objective, lo, float(k[i + 1]))
        if vv < best:
            best_k, best = kk, vv
    return best, best_k


# --- instability threshold -----------------------------------------------------

def _threshold_terms(k, wk, w0):
    return _ratio(k**2 * w0, 2.0 * np.maximum(-wk, 0.0))


def instability_threshold(p: Potential, kgrid=None, refine: bool = True) -> tuple[float, float | None]:
    """``(mu_star, k0)`` where the constant solution loses linear stability.

    ``mu_star = min_k k^2 w_hat(0) / (2 w_hat_-(k))``; ``+inf`` (with ``k0 =
    None``) when ``w_hat >= -1e-10 w_hat(0)`` on the whole scan.
    """
    k, wk, w0 = _scan(p, kgrid)
    if np.min(wk) >= -NONNEG_TOL * abs(w0):
        return math.inf, None
    vals = _threshold_terms(k, wk, w0)

    def obj(x):
        return float(_threshold_terms(np.array([x]), np.array([fourier_transform(p, x)]), w0)[0])

    return _scan_minimum(k, vals, obj, refine, "instability threshold")


# --- general lower bound -------------------------------------------------------

def general_alpha(p: Potential) -> float:
    m = moments(p, allow_divergent=True)
    return math.sqrt(m.absolute) * max(p.epsilon ** -0.5, p.r)


def _general_terms(p: Potential, k, wk, w0, alpha):
    d = p.dim
    smear = p.epsilon * (2 * np.pi) ** (-d / 2) * np.maximum(1.0 - k**2 * p.r**2 / 6.0, 0.0) ** 2
    den = np.maximum((1.0 + alpha) * np.abs(w0 - wk) - smear, 0.0)
    return _ratio(k**2 * w0, 2.0**2.5 * den)


def lower_bound_general(p: Potential, kgrid=None, refine: bool = True) -> tuple[float, float]:
    """General lower bound on the critical chemical potential and its ``alpha``.

    Needs only the superstability split ``(epsilon, r)`` of the potential.
    """
    alpha = general_alpha(p)
    k, wk, w0 = _scan(p, kgrid)
    vals = _general_terms(p, k, wk, w0, alpha)

    def obj(x):
        return float(_general_terms(p, np.array([x]), np.array([fourier_transform(p, x)]), w0, alpha)[0])

    value, _ = _scan_minimum(k, vals, obj, refine, "general lower bound")
    return value, alpha


# --- simpler bounds ----------------------------------------------------------------

def mu_one(p: Potential) -> float | None:
    """``d int w / int |x|^2 |w|``, or None when the second moment diverges."""
    try:
        m = moments(p)
    except DivergentMomentError:
        return None
    return math.inf if m.second <= 0 else p.dim * m.first / m.second


def lower_bound_radial(p: Potential) -> float | None:
    """Moment bound ``((sqrt5 - 1)/2) d int w / int |x|^2 |w|``; None if ``s <= d + 2``."""
    m1 = mu_one(p)
    return None if m1 is None else GOLDEN * m1


def tail_nonnegative(p: Potential) -> bool:
    if p.contact < 0:
        return False
    if not p.has_tail:
        return True
    q = p.quadrature()
    x = np.concatenate([q.nodes, [0.0]])
    return bool(np.min(p.tail(x)) >= 0.0)


def _nonneg_terms(k, wk, w0):
    return _ratio(k**2 * w0, 2.0 * np.maximum(w0 - 2.0 * wk, 0.0))


def lower_bound_nonneg(p: Potential, kgrid=None, refine: bool = True) -> float | None:
    """Bound valid for ``w >= 0``; None when the tail takes negative values."""
    if not tail_nonnegative(p):
        return None
    k, wk, w0 = _scan(p, kgrid)
    vals = _nonneg_terms(k, wk, w0)

    def obj(x):
        return float(_nonneg_terms(np.array([x]), np.array([fourier_transform(p, x)]), w0)[0])

    value, _ = _scan_minimum(k, vals, obj, refine, "non-negative lower bound")
    return value


def pohozaev_margin(p: Potential, kgrid=None, tol: float = 1e-8) -> float:
    """Largest ``c >= 0`` with ``2 w_hat - k w_hat' >= c w_hat^2`` on the scan.

    The derivative is a central difference on the grid, which should
    therefore be uniform and include ``k = 0``. Returns 0 when the left side
    is negative somewhere.
    """
    if kgrid is None:
        prof = fourier_profile(p)
        k, wk = prof.k, prof.values
    else:
        k = np.asarray(kgrid, dtype=float)
        wk = np.asarray(fourier_transform(p, k))
    if k.size < 3:
        raise ValueError("need at least three wavenumbers")
    w0 = abs(float(fourier_transform(p, 0.0)))
    lhs = 2.0 * wk - k * np.gradient(wk, k)
    if np.min(lhs) < -tol * w0:
        return 0.0
    sq = wk**2
    big = sq > (tol * w0) ** 2
    if not np.any(big):
        return math.inf
    return float(max(0.0, np.min(lhs[big] / sq[big])))


# --- report ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalityReport:
    mu_star: float
    k0: float | None
    mu_lb_general: float
    mu_lb_radial: float | None
    mu_lb_nonneg: float | None
    alpha: float
    pohozaev_margin: float

    def lower_bounds(self) -> dict[str, float | None]:
        return {
            "lower_bound_general": self.mu_lb_general,
            "lower_bound_radial": self.mu_lb_radial,
            "lower_bound_nonneg": self.mu_lb_nonneg,
        }

    def ordering_holds(self, rtol: float = 1e-9) -> bool:
        """Every finite lower bound lies below ``mu_star``."""
        if not math.isfinite(self.mu_star):
            return True
        return all(
            v is None or not math.isfinite(v) or v <= self.mu_star * (1 + rtol)
            for v in self.lower_bounds().values()
        )

    def rows(self) -> list[tuple[str, float | str, float | str, str]]:
        """``(name, value, k0, applicability)`` rows for tabular output."""

        def cell(v):
            return "not-applicable" if v is None else v

        k0 = "" if self.k0 is None else self.k0
        out = [("mu_star", self.mu_star, k0, "applicable")]
        for name, v in self.lower_bounds().items():
            out.append((name, cell(v), "", "not-applicable" if v is None else "applicable"))
        out.append(("alpha", self.alpha, "", "applicable"))
        out.append(("pohozaev_margin", self.pohozaev_margin, "", "applicable"))
        return out


def criticality_report(p: Potential, kgrid=None, refine: bool = True) -> CriticalityReport:
    mu_star, k0 = instability_threshold(p, kgrid, refine)
    general, alpha = lower_bound_general(p, kgrid, refine)
    pk = None if kgrid is None else np.unique(np.concatenate([[0.0], np.asarray(kgrid, dtype=float)]))
    return CriticalityReport(
        mu_star=mu_star,
        k0=k0,
        mu_lb_general=general,
        mu_lb_radial=lower_bound_radial(p),
        mu_lb_nonneg=lower_bound_nonneg(p, kgrid, refine),
        alpha=alpha,
        pohozaev_margin=pohozaev_margin(p, pk),
    )

