"""Order parameters read off a single field: oscillation, peaks, winding, momentum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegreeUndefinedError
from .lattice import Field
from .potential import Potential, integral, moments

OSCILLATION_SLACK = 0.5
PEAK_THRESHOLD = 0.1


def _interior_slices(f: Field, margin: float) -> tuple[slice, ...]:
    g = f.grid
    out = []
    for i in range(g.dim):
        x = g.axis(i) - g.origin[i]
        keep = np.flatnonzero((x >= margin) & (x <= g.extents[i] - margin))
        if keep.size == 0:
            raise ValueError("boundary margin leaves no interior nodes")
        out.append(slice(int(keep[0]), int(keep[-1]) + 1))
    return tuple(out)


@dataclass(frozen=True)
class OscillationReport:
    R: float
    centers: np.ndarray
    window_max: np.ndarray
    window_min: np.ndarray
    variance: np.ndarray
    min_range_sq: float
    min_variance: float
    rhs: float
    slack: float

    @property
    def flag(self) -> bool:
        """Worst-window squared range reaches ``slack * rhs`` (with rhs > 0)."""
        return self.rhs > 0 and self.min_range_sq >= self.slack * self.rhs


def oscillation_rhs(p: Potential, mu: float, rho: float) -> float:
    """``rho (rho int w - mu) / int |w|``."""
    m = moments(p, allow_divergent=True)
    return rho * (rho * integral(p) - mu) / m.absolute


def oscillation(
    f: Field,
    R: float,
    p: Potential | None = None,
    mu: float | None = None,
    margin: float | None = None,
    slack: float = OSCILLATION_SLACK,
) -> OscillationReport:
    """Sliding-window extremes and variance of ``|u|^2`` over the bulk.

    Windows are segments (1D) or disks (2D) of radius ``R`` that stay clear
    of the boundary layer. The comparison value needs ``p`` and ``mu``; the
    density entering it is the bulk mean of ``|u|^2``.
    """
    g = f.grid
    if g.mask is not None:
        raise ValueError("oscillation windows need an unmasked box grid")
    if R < 3 * g.h:
        raise ValueError("window radius must be at least 3h")
    margin = g.interior_margin() if margin is None else margin
    dens = f.density[_interior_slices(f, margin)]
    m = int(round(R / g.h))
    if any(2 * m + 1 > n for n in dens.shape):
        raise ValueError("window larger than the interior")
    if g.dim == 1:
        fp = np.ones(2 * m + 1, dtype=bool)
    else:
        yy, xx = np.mgrid[-m : m + 1, -m : m + 1]
        fp = xx * xx + yy * yy <= m * m
    kern = fp / fp.sum()
    wmax = ndimage.maximum_filter(dens, footprint=fp, mode="nearest")
    wmin = ndimage.minimum_filter(dens, footprint=fp, mode="nearest")
    mean = ndimage.correlate(dens, kern, mode="nearest")
    sq = ndimage.correlate(dens * dens, kern, mode="nearest")
    valid = tuple(slice(m, n - m) for n in dens.shape)
    wmax, wmin = wmax[valid], wmin[valid]
    var = np.maximum(sq[valid] - mean[valid] ** 2, 0.0)
    sl = _interior_slices(f, margin)
    centers = np.stack(
        np.meshgrid(*[g.axis(i)[sl[i]][m : dens.shape[i] - m] for i in range(g.dim)], indexing="ij"), axis=-1
    )
    rhs = math.nan
    if p is not None and mu is not None:
        rhs = oscillation_rhs(p, mu, float(np.mean(dens)))
    rng = (wmax - wmin) ** 2
    return OscillationReport(
        R=R,
        centers=centers.reshape(-1, g.dim),
        window_max=wmax.ravel(),
        window_min=wmin.ravel(),
        variance=var.ravel(),
        min_range_sq=float(rng.min()),
        min_variance=float(var.min()),
        rhs=rhs,
        slack=slack,
    )


@dataclass(frozen=True)
class PeakReport:
    count: int
    period: float | None
    positions: np.ndarray


def peak_period(f: Field, threshold: float = PEAK_THRESHOLD, margin: float | None = None) -> PeakReport:
    """Strict local maxima of ``|u|^2`` above ``mean + threshold (max - mean)``.

    The period is the mean spacing of the peaks that lie outside the
    boundary layer; it is None with fewer than two such peaks.
    """
    g = f.grid
    if g.dim != 1:
        raise ValueError("peak counting is one-dimensional")
    d = f.density
    level = d.mean() + threshold * (d.max() - d.mean())
    inner = d[1:-1]
    idx = np.flatnonzero((inner > d[:-2]) & (inner > d[2:]) & (inner > level)) + 1
    x = g.axis(0)[idx]
    margin = g.interior_margin() if margin is None else margin
    rel = x - g.origin[0]
    bulk = x[(rel >= margin) & (rel <= g.extents[0] - margin)]
    period = float(np.mean(np.diff(bulk))) if bulk.size >= 2 else None
    return PeakReport(int(idx.size), period, x)


def _sample_bilinear(f: Field, px, py) -> np.ndarray:
    g = f.grid
    shift = 1.0 if g.bc == "dirichlet" else 0.5
    ix = (px - g.origin[0]) / g.h - shift
    iy = (py - g.origin[1]) / g.h - shift
    n0, n1 = g.shape
    if np.any((ix < 0) | (ix > n0 - 1) | (iy < 0) | (iy > n1 - 1)):
        raise ValueError("circle leaves the grid")
    coords = np.stack([ix, iy])
    v = f.values
    re = ndimage.map_coordinates(np.real(v), coords, order=1)
    im = ndimage.map_coordinates(np.imag(v), coords, order=1) if np.iscomplexobj(v) else 0.0 * re
    return re + 1j * im


def winding_degree(f: Field, radius: float, center=(0.0, 0.0), points: int | None = None) -> int:
    """Sum of wrapped phase increments around a circle, divided by ``2 pi``.

    At least 64 samples (a multiple of 8) are taken, with bilinear
    interpolation between nodes; sampling is doubled until no increment
    exceeds ``pi/2`` so that the wrapping is unambiguous.
    """
    g = f.grid
    if g.dim != 2:
        raise ValueError("winding degree needs a 2D field")
    n = points or max(64, 8 * math.ceil(2 * math.pi * radius / g.h / 8))
    n = max(64, 8 * math.ceil(n / 8))
    for _ in range(8):
        th = 2 * math.pi * np.arange(n) / n
        z = _sample_bilinear(f, center[0] + radius * np.cos(th), center[1] + radius * np.sin(th))
        mod = np.abs(z)
        if mod.min() <= 1e-12 * max(1.0, float(np.max(np.abs(f.values)))):
            raise DegreeUndefinedError(f"field vanishes on the circle of radius {radius:g}")
        steps = np.angle(np.roll(z, -1) / z)  # in (-pi, pi]
        if np.max(np.abs(steps)) < math.pi / 2:
            return int(round(steps.sum() / (2 * math.pi)))
        n *= 2
    raise DegreeUndefinedError("phase varies too fast on the circle to resolve")


def momentum_density(f: Field, window=None) -> np.ndarray:
    """Average ``Im(conj(u) grad u)`` over a box ``window = ((lo, hi), ...)``.

    Central differences; the default window is the interior after removing
    the boundary layer.
    """
    g = f.grid
    u = f.values
    if window is None:
        sl = _interior_slices(f, g.interior_margin())
    else:
        sl = []
        for i, (lo, hi) in enumerate(window):
            x = g.axis(i)
            keep = np.flatnonzero((x >= lo) & (x <= hi))
            if keep.size == 0 or keep[0] == 0 or keep[-1] == x.size - 1:
                raise ValueError("window must lie strictly inside the grid")
            sl.append(slice(int(keep[0]), int(keep[-1]) + 1))
        sl = tuple(sl)
    if not np.iscomplexobj(u):
        return np.zeros(g.dim)
    out = []
    for a in range(g.dim):
        du = np.gradient(u, g.h, axis=a)
        out.append(float(np.mean(np.imag(np.conj(u) * du)[sl])))
    return np.array(out)
