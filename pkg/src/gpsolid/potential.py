"""Radial interaction potentials ``w = contact * delta_0 + tail``.

A :class:`Potential` stores the Dirac coefficient at the origin, the smooth
(or piecewise smooth) radial tail, and the superstability data: a split
``w = epsilon * delta_r * delta_r + w_2`` with ``w_2`` stable, together with
the decay exponent ``s`` and constant ``kappa`` of the far-field envelope
``tail(x) <= kappa / |x|**s`` for ``|x| >= kappa``.

Fourier transforms use the unitary convention
``w_hat(k) = (2 pi)^(-d/2) int w(x) exp(-i k.x) dx`` and are evaluated as
radial (Hankel-type) integrals on composite Gauss-Legendre panels.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.interpolate import CubicSpline

from .errors import DivergentMomentError, PotentialError, QuadratureError

FAMILIES = ("step", "vdw", "gaussian", "truncated-lennard-jones", "pure-contact", "tabulated")

_GL_ORDER = 8
_QUAD_RTOL = 1e-10
_MAX_NODES = 2**20
_TRUNCATION_RTOL = 1e-11
_UNIFORM_RADIUS = 512.0
_GEOMETRIC_RATIO = 1.5


# --- radial profiles (module level so potentials pickle for worker pools) ---

def _zero_profile(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def _step_profile(r, c, R0):
    return np.where(np.asarray(r) <= R0, float(c), 0.0)


def _vdw_profile(r, c):
    r = np.asarray(r, dtype=float)
    return c / (1.0 + r**6)


def _gaussian_profile(r, c, sigma):
    r = np.asarray(r, dtype=float)
    return c * np.exp(-0.5 * (r / sigma) ** 2)


def _tlj_profile(r, A, sigma):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        q = (sigma / r) ** 6
        lj = q * q - q
    return np.where(r > 0, np.minimum(A, np.nan_to_num(lj, nan=A, posinf=A)), A)


class _ScaledProfile:
    def __init__(self, profile, factor):
        self.profile = profile
        self.factor = float(factor)

    def __call__(self, r):
        return self.factor * self.profile(r)


class TabulatedProfile:
    """Cubic interpolant of ``(x, w(x))`` samples in ``|x|``.

    Beyond the last sample the tail continues linearly, clipped to the
    envelope ``[-kappa/|x|^s, kappa/|x|^s]``.
    """

    def __init__(self, x, w, s, kappa):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or x.size < 4:
            raise PotentialError("tabulated data needs at least 4 (x, w) pairs")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise PotentialError("tabulated data contains non-finite values")
        ax = np.abs(x)
        order = np.argsort(ax, kind="stable")
        ax, wv = ax[order], w[order]
        uniq, first = np.unique(ax, return_index=True)
        # mirrored samples must agree: the tail is even
        for i, a in enumerate(uniq):
            vals = wv[ax == a]
            if np.ptp(vals) > 1e-9 * max(1.0, float(np.max(np.abs(vals)))):
                raise PotentialError(f"tabulated data is not even at |x|={a:g}")
        wv = wv[first]
        if uniq.size < 4:
            raise PotentialError("tabulated data needs at least 4 distinct |x| values")
        self.r = uniq
        self.values = wv
        self.s = float(s)
        self.kappa = float(kappa)
        self.spline = CubicSpline(uniq, wv, bc_type="natural")
        self.rmax = float(uniq[-1])
        self.slope = float((wv[-1] - wv[-2]) / (uniq[-1] - uniq[-2]))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.rmax
        out = np.empty_like(r)
        out[inside] = self.spline(np.maximum(r[inside], self.r[0]))
        far = r[~inside]
        lin = self.values[-1] + self.slope * (far - self.rmax)
        env = self.kappa / far**self.s
        out[~inside] = np.clip(lin, -env, env)
        return out


def ball_volume(d: int, r: float) -> float:
    return math.pi ** (d / 2) * r**d / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _radial_kernel(d: int, z):
    """Angular average of exp(-i k.x), normalized to 1 at z = 0."""
    z = np.asarray(z, dtype=float)
    if d == 1:
        return np.cos(z)
    if d == 2:
        return special.j0(z)
    if d == 3:
        return np.sinc(z / np.pi)
    nu = d / 2 - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        val = math.gamma(d / 2) * (2 / z) ** nu * special.jv(nu, z)
    return np.where(z == 0, 1.0, val)


def _ball_transform(d: int, z):
    """Fourier transform of the normalized ball indicator times (2 pi)^(d/2)."""
    z = np.asarray(z, dtype=float)
    if d == 1:
        return np.sinc(z / np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = math.gamma(d / 2 + 1) * (2 / z) ** (d / 2) * special.jv(d / 2, z)
    return np.where(z == 0, 1.0, val)


def smeared_delta_self_convolution(d: int, r: float, x):
    """Pointwise value of ``delta_r * delta_r`` at distance ``x`` (r > 0)."""
    t = np.asarray(x, dtype=float)
    vol = ball_volume(d, r)
    if d == 1:
        overlap = np.maximum(2 * r - t, 0.0)
    elif d == 2:
        tt = np.minimum(t, 2 * r)
        overlap = 2 * r**2 * np.arccos(tt / (2 * r)) - 0.5 * tt * np.sqrt(4 * r**2 - tt**2)
    elif d == 3:
        tt = np.minimum(t, 2 * r)
        overlap = np.pi * (4 * r + tt) * (2 * r - tt) ** 2 / 12
    else:
        raise PotentialError("smeared delta only implemented for d <= 3")
    return overlap / vol**2


class RadialQuadrature(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray  # include the surface factor |S^{d-1}| r^{d-1}
    error: float


class Moments(NamedTuple):
    first: float  # int w
    absolute: float  # int |w|
    second: float  # int |x|^2 |w|
    error: float


class Stability(str, enum.Enum):
    STABLE_SUFFICIENT = "stable-sufficient"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class Potential:
    """Even radial interaction ``contact * delta_0 + profile(|x|)``.

    Identity-hashed and immutable; derived quadratures and Fourier scans are
    memoized per instance.
    """

    dim: int
    contact: float
    profile: Callable[[np.ndarray], np.ndarray]
    s: float
    kappa: float
    epsilon: float
    r: float
    family: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    support: float | None = None
    breakpoints: tuple[float, ...] = ()
    cutoff: float | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def tail(self, x) -> np.ndarray:
        """Tail evaluated at distances (or signed 1D positions) ``x``."""
        return np.asarray(self.profile(np.abs(np.asarray(x, dtype=float))), dtype=float)

    @property
    def has_tail(self) -> bool:
        return self.family != "pure-contact"

    def truncation_radius(self) -> float:
        if not self.has_tail:
            return 0.0
        if self.support is not None:
            return float(self.support)
        if self.cutoff is not None:
            return float(self.cutoff)
        # far-field envelope mass below _TRUNCATION_RTOL of the kappa scale
        d, s = self.dim, self.s
        if not math.isfinite(s):
            return float(self.kappa)
        R = (sphere_area(d) * self.kappa / ((s - d) * _TRUNCATION_RTOL)) ** (1 / (s - d))
        return float(max(R, self.kappa))

    def scaled(self, factor: float) -> "Potential":
        """The potential ``factor * w`` with ``epsilon`` scaled alongside."""
        if factor <= 0:
            raise PotentialError("scale factor must be positive")
        return Potential(
            dim=self.dim,
            contact=self.contact * factor,
            profile=_ScaledProfile(self.profile, factor),
            s=self.s,
            kappa=max(self.kappa, self.kappa * factor),
            epsilon=self.epsilon * factor,
            r=self.r,
            family=self.family,
            params={**self.params, "_scale": factor},
            support=self.support,
            breakpoints=self.breakpoints,
            cutoff=self.cutoff,
        )

    # -- quadrature ---------------------------------------------------------

    def quadrature(self, kmax: float = 0.0) -> RadialQuadrature:
        """Gauss-Legendre panels resolving wavenumbers up to ``kmax``."""
        key = ("quad", _round_key(kmax))
        if key not in self._cache:
            self._cache[key] = _build_quadrature(self, kmax)
        return self._cache[key]


def _round_key(k: float) -> float:
    # quadratures are built on a doubling ladder of resolvable wavenumbers
    if k <= 8.0:
        return 8.0
    return float(2 ** math.ceil(math.log2(k)))


def _panel_nodes(edges: np.ndarray):
    g, wg = leggauss(_GL_ORDER)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = (b - a) / 2
    x = (half * g + (a + b) / 2).ravel()
    w = (half * wg).ravel()
    return x, w


def _build_quadrature(p: Potential, kmax: float) -> RadialQuadrature:
    if not p.has_tail:
        return RadialQuadrature(np.zeros(0), np.zeros(0), 0.0)
    R_u = R = p.truncation_radius()
    d, s = p.dim, p.s
    if math.isfinite(s) and s > d + 2 and p.support is None and p.cutoff is None:
        # the second moment's tail decays slower; cover it with cheap geometric panels
        R = max(R, (sphere_area(d) * p.kappa / ((s - d - 2) * _TRUNCATION_RTOL)) ** (1 / (s - d - 2)))
    kres = max(_round_key(kmax), 1.0)
    # slowly decaying tails: uniform panels up to R_u, geometric panels beyond
    R_u = min(R_u, max(_UNIFORM_RADIUS, 256 * p.kappa))
    breaks = sorted({0.0, R_u, *[b for b in p.breakpoints if 0 < b < R_u]})
    far = [R_u]
    while far[-1] < R:
        far.append(min(R, far[-1] * _GEOMETRIC_RATIO))
    width0 = width = min(0.5, math.pi / kres)

    def build(width):
        xs, ws = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            n = max(1, int(math.ceil((b - a) / width)))
            x, w = _panel_nodes(np.linspace(a, b, n + 1))
            xs.append(x)
            ws.append(w)
        split = max(1, int(round(width0 / width)))
        for a, b in zip(far[:-1], far[1:]):
            x, w = _panel_nodes(np.linspace(a, b, split + 1))
            xs.append(x)
            ws.append(w)
        x = np.concatenate(xs)
        w = np.concatenate(ws) * sphere_area(p.dim) * x ** (p.dim - 1)
        return x, w

    def probes(x, w):
        t = p.tail(x) * w
        kern = _radial_kernel(p.dim, kres * x)
        return np.array([t.sum(), np.abs(t).sum(), (x * x * np.abs(t)).sum(), (t * kern).sum()])

    x, w = build(width)
    prev = probes(x, w)
    while True:
        width /= 2
        x2, w2 = build(width)
        if x2.size > _MAX_NODES:
            raise QuadratureError(
                f"radial quadrature for {p.family} did not converge with {_MAX_NODES} nodes"
            )
        cur = probes(x2, w2)
        scale = max(abs(cur[1]), abs(cur[2]), 1e-300)
        err = float(np.max(np.abs(cur - prev)) / scale)
        if err < _QUAD_RTOL:
            # keep the coarser rule: it already meets the tolerance
            return RadialQuadrature(x, w, err * scale)
        x, w, prev = x2, w2, cur


# --- family constructors -----------------------------------------------------

def _envelope_kappa(profile, s: float, floor: float, rmax: float) -> float:
    """Smallest kappa >= floor with profile(x) <= kappa/x^s for x >= kappa."""
    radii = np.unique(np.concatenate([np.linspace(1e-3, 10.0, 4001), np.geomspace(10.0, max(rmax, 20.0), 2000)]))
    vals = np.asarray(profile(radii), dtype=float)
    ratio = vals * radii**s  # need ratio <= kappa for radii >= kappa
    suffix_max = np.maximum.accumulate(ratio[::-1])[::-1]
    for i, rad in enumerate(radii):
        kappa = max(rad, floor)
        j = np.searchsorted(radii, kappa)
        if j >= radii.size or suffix_max[j] <= kappa * (1 + 1e-12):
            return float(kappa)
    return float(max(radii[-1], floor))


def make_potential(
    family: str,
    params: Mapping[str, float] | None = None,
    *,
    dim: int = 1,
    contact: float | None = None,
    epsilon: float | None = None,
    r: float | None = None,
    s: float | None = None,
    kappa: float | None = None,
    data: tuple[np.ndarray, np.ndarray] | None = None,
) -> Potential:
    """Build a potential from a named family.

    Families and their parameters (defaults in brackets):

    ``step``: ``c [1]``, ``R0 [1]`` -- ``c * 1(|x| <= R0)``
    ``vdw``: ``c [1]`` -- ``c / (1 + |x|^6)``
    ``gaussian``: ``c [1]``, ``sigma [1]``
    ``truncated-lennard-jones``: ``A [10]``, ``sigma [1]`` -- ``min(A, (sigma/|x|)^12 - (sigma/|x|)^6)``
    ``pure-contact``: ``strength [1]`` -- ``strength * delta_0``
    ``tabulated``: ``data=(x, w)``; ``s`` and ``kappa`` should be declared.

    ``epsilon``, ``r``, ``s`` and ``kappa`` override the family defaults;
    ``contact`` adds a Dirac coefficient to any family with a tail.
    """
    if family not in FAMILIES:
        raise PotentialError(f"unknown potential family {family!r}; expected one of {FAMILIES}")
    if dim < 1:
        raise PotentialError("dimension must be a positive integer")
    params = {k: float(v) for k, v in (params or {}).items()}

    def take(name, default):
        return params.pop(name, default)

    contact0 = 0.0
    support = None
    breakpoints: tuple[float, ...] = ()
    cutoff = None
    if family == "step":
        c, R0 = take("c", 1.0), take("R0", 1.0)
        if R0 <= 0:
            raise PotentialError("step radius R0 must be positive")
        profile = functools.partial(_step_profile, c=c, R0=R0)
        support, breakpoints = R0, (R0,)
        s_def, r_def, height = math.inf, R0 / 2, c
        used = {"c": c, "R0": R0}
    elif family == "vdw":
        c = take("c", 1.0)
        profile = functools.partial(_vdw_profile, c=c)
        s_def, r_def, height = 6.0, 1.0, c
        used = {"c": c}
    elif family == "gaussian":
        c, sigma = take("c", 1.0), take("sigma", 1.0)
        if sigma <= 0:
            raise PotentialError("gaussian width sigma must be positive")
        profile = functools.partial(_gaussian_profile, c=c, sigma=sigma)
        cutoff = 9.0 * sigma
        s_def, r_def, height = 8.0, sigma, c
        used = {"c": c, "sigma": sigma}
    elif family == "truncated-lennard-jones":
        A, sigma = take("A", 10.0), take("sigma", 1.0)
        if A <= 0 or sigma <= 0:
            raise PotentialError("truncated-lennard-jones needs A > 0 and sigma > 0")
        # (sigma/x)^6 = q solves q^2 - q = A at the truncation radius
        q = 0.5 * (1 + math.sqrt(1 + 4 * A))
        xA = sigma * q ** (-1 / 6)
        profile = functools.partial(_tlj_profile, A=A, sigma=sigma)
        breakpoints = (xA, sigma)
        s_def, r_def, height = 6.0, xA / 2, A
        used = {"A": A, "sigma": sigma}
    elif family == "pure-contact":
        contact0 = take("strength", 1.0)
        if contact0 <= 0:
            raise PotentialError("pure-contact strength must be positive")
        profile = _zero_profile
        support = 0.0
        s_def, r_def, height = math.inf, 0.0, 0.0
        used = {"strength": contact0}
    else:  # tabulated
        if data is None:
            raise PotentialError("tabulated family requires data=(x, w)")
        s_def = take("s", s if s is not None else dim + 3.0)
        k_decl = kappa if kappa is not None else take("kappa", 1.0)
        profile = TabulatedProfile(data[0], data[1], s_def, k_decl)
        r_half = profile.r[np.argmax(profile.values <= 0.5 * profile.values[0])] if profile.values[0] > 0 else 0.0
        r_def, height = 0.5 * float(r_half), float(profile.values[0])
        breakpoints = (profile.rmax,)
        used = {}
        kappa = k_decl
    if params:
        raise PotentialError(f"unknown parameters for {family}: {sorted(params)}")

    contact_total = contact0 + (contact or 0.0)
    if contact_total < 0:
        raise PotentialError("contact coefficient must be >= 0")
    s_val = float(s if s is not None else s_def)
    if s_val <= dim:
        raise PotentialError("decay exponent s must exceed the dimension")
    r_val = float(r if r is not None else r_def)
    if r_val < 0:
        raise PotentialError("smear radius r must be >= 0")
    if epsilon is not None:
        eps_val = float(epsilon)
    elif r_val == 0:
        eps_val = contact_total if contact_total > 0 else 0.125 * height
    else:
        eps_val = 0.125 * height * ball_volume(dim, r_val)
    if eps_val <= 0:
        raise PotentialError("superstability constant epsilon must be positive")
    if kappa is None:
        if math.isinf(s_val):
            kappa_val = max(support or 0.0, 2 * r_val)
        else:
            kappa_val = _envelope_kappa(profile, s_val, 2 * r_val, rmax=1e3)
    else:
        kappa_val = float(kappa)

    pot = Potential(
        dim=dim,
        contact=float(contact_total),
        profile=profile,
        s=s_val,
        kappa=float(kappa_val),
        epsilon=eps_val,
        r=r_val,
        family=family,
        params=used,
        support=support,
        breakpoints=breakpoints,
        cutoff=cutoff,
    )
    _validate(pot)
    return pot


def _validate(p: Potential) -> None:
    m = moments(p, allow_divergent=True)
    if not m.first > 0:
        raise PotentialError(f"int w = {m.first:.6g} must be strictly positive")
    if p.has_tail and math.isfinite(p.s):
        x = np.geomspace(max(p.kappa, 1e-6), max(100 * p.kappa, 1e3), 400)
        env = p.kappa / x**p.s
        if np.any(p.tail(x) > env * (1 + 1e-9) + 1e-300):
            raise PotentialError("tail exceeds the declared envelope kappa/|x|^s for |x| >= kappa")


# --- integrals ---------------------------------------------------------------

def moments(p: Potential, allow_divergent: bool = False) -> Moments:
    """``(int w, int |w|, int |x|^2 |w|)`` with a quadrature error estimate.

    The contact term adds to the first two and nothing to the second.
    Raises :class:`DivergentMomentError` when ``s <= d + 2`` unless
    ``allow_divergent`` is set, in which case the second moment is ``inf``.
    """
    key = "moments"
    if key not in p._cache:
        q = p.quadrature()
        t = p.tail(q.nodes) * q.weights
        p._cache[key] = Moments(
            float(t.sum() + p.contact),
            float(np.abs(t).sum() + p.contact),
            float((q.nodes**2 * np.abs(t)).sum()),
            q.error,
        )
    m = p._cache[key]
    if p.s <= p.dim + 2:
        if not allow_divergent:
            raise DivergentMomentError(
                f"second moment diverges for s={p.s:g} <= d+2={p.dim + 2}"
            )
        return m._replace(second=math.inf)
    return m


def integral(p: Potential) -> float:
    """``int w`` including the contact term."""
    return moments(p, allow_divergent=True).first


def fourier_transform(p: Potential, k) -> np.ndarray | float:
    """Radial Fourier transform ``w_hat(k)`` for ``k >= 0`` (scalar or array)."""
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 0):
        raise ValueError("wavenumbers must be non-negative")
    flat = karr.ravel()
    out = np.full(flat.shape, p.contact * (2 * np.pi) ** (-p.dim / 2))
    if p.has_tail and flat.size:
        q = p.quadrature(float(flat.max()))
        t = p.tail(q.nodes) * q.weights
        if p.dim == 1 and _is_uniform(flat):
            out += (2 * np.pi) ** -0.5 * _uniform_cosine_sum(flat[0], flat[1] - flat[0], flat.size, q.nodes, t)
            out = out.reshape(karr.shape)
            return float(out) if out.ndim == 0 else out
        chunk = max(1, 2**22 // max(1, q.nodes.size))
        for lo in range(0, flat.size, chunk):
            kk = flat[lo : lo + chunk]
            out[lo : lo + chunk] += (2 * np.pi) ** (-p.dim / 2) * (
                _radial_kernel(p.dim, np.outer(kk, q.nodes)) @ t
            )
    out = out.reshape(karr.shape)
    return float(out) if out.ndim == 0 else out


def _is_uniform(k: np.ndarray) -> bool:
    if k.size < 256:
        return False
    step = np.diff(k)
    return bool(step[0] > 0 and np.all(np.abs(step - step[0]) <= 1e-9 * step[0]))


def _uniform_cosine_sum(k0: float, dk: float, n: int, x: np.ndarray, t: np.ndarray, block: int = 64):
    """``sum_j t_j cos((k0 + i dk) x_j)`` for ``i < n`` as one complex GEMM.

    The phase factorizes as ``e^{i k0 x} e^{i m B dk x} e^{i b dk x}`` with
    ``i = m B + b``, so only ``O((n / B + B) N)`` exponentials are needed.
    """
    m = -(-n // block)
    base = t * np.exp(1j * k0 * x)
    outer = base[None, :] * np.exp(1j * np.outer(np.arange(m) * block * dk, x))
    inner = np.exp(1j * np.outer(np.arange(block) * dk, x))
    return (outer @ inner.T).real.ravel()[:n]


def characteristic_length(p: Potential) -> float | None:
    """RMS radius of ``|tail|`` (or its half-mass radius for slow decay)."""
    if not p.has_tail:
        return None
    q = p.quadrature()
    t = np.abs(p.tail(q.nodes)) * q.weights
    mass = t.sum()
    if mass <= 0:
        return None
    if p.s > p.dim + 2:
        return float(math.sqrt((q.nodes**2 * t).sum() / mass))
    cum = np.cumsum(t)
    return float(q.nodes[np.searchsorted(cum, 0.5 * mass)])


def default_kgrid(p: Potential, n: int = 4096, kmax: float | None = None) -> np.ndarray:
    """``n`` uniform wavenumbers on ``(0, kmax]`` with ``kmax = 20 / length``."""
    if kmax is None:
        ell = characteristic_length(p)
        kmax = 50.0 if ell is None else 20.0 / ell
    return np.linspace(kmax / n, kmax, n)


@dataclass(frozen=True)
class FourierProfile:
    k: np.ndarray
    values: np.ndarray
    dim: int

    @property
    def convention_factor(self) -> float:
        return (2 * np.pi) ** (-self.dim / 2)

    @property
    def at_zero(self) -> float:
        return float(self.values[0]) if self.k[0] == 0 else math.nan


def fourier_profile(p: Potential, kgrid=None) -> FourierProfile:
    """``w_hat`` on ``kgrid`` (default scan grid), memoized for the default."""
    if kgrid is None:
        key = "profile-default"
        if key not in p._cache:
            k = np.concatenate([[0.0], default_kgrid(p)])
            p._cache[key] = FourierProfile(k, fourier_transform(p, k), p.dim)
        return p._cache[key]
    k = np.asarray(kgrid, dtype=float)
    return FourierProfile(k, fourier_transform(p, k), p.dim)


# --- superstability ------------------------------------------------------------

def remainder_transform(p: Potential, k) -> np.ndarray:
    """Fourier transform of ``w_2 = w - epsilon * delta_r * delta_r``."""
    k = np.asarray(k, dtype=float)
    smear = p.epsilon * (2 * np.pi) ** (-p.dim / 2) * _ball_transform(p.dim, k * p.r) ** 2
    return np.asarray(fourier_transform(p, k)) - smear


def stability_check(p: Potential, kgrid=None, tol: float = 1e-10) -> Stability:
    """Sufficient test that ``w_2`` is stable.

    Passes when either ``w_2_hat >= 0`` on the scan grid or ``w_2 >= 0``
    pointwise on sampled radii (both imply stability for non-negative
    densities). Otherwise the answer is ``indeterminate``.
    """
    if kgrid is None and "stability" in p._cache:
        return p._cache["stability"]
    k = np.concatenate([[0.0], default_kgrid(p)]) if kgrid is None else np.asarray(kgrid, dtype=float)
    what0 = float(fourier_transform(p, 0.0))
    w2hat = remainder_transform(p, k)
    if np.min(w2hat) >= -tol * abs(what0):
        result = Stability.STABLE_SUFFICIENT
    else:
        result = Stability.STABLE_SUFFICIENT if _pointwise_remainder_nonneg(p, tol) else Stability.INDETERMINATE
    if kgrid is None:
        p._cache["stability"] = result
    return result


def _pointwise_remainder_nonneg(p: Potential, tol: float) -> bool:
    dirac = p.contact - (p.epsilon if p.r == 0 else 0.0)
    if dirac < -tol * max(p.contact, p.epsilon):
        return False
    if not p.has_tail:
        return True
    rmax = max(p.truncation_radius(), 2 * p.r)
    x = np.unique(np.concatenate([np.linspace(0.0, max(2 * p.r, 1e-9), 2001), p.quadrature().nodes, np.geomspace(1e-6, rmax, 2000)]))
    w2 = p.tail(x)
    if p.r > 0:
        w2 = w2 - p.epsilon * smeared_delta_self_convolution(p.dim, p.r, x)
    scale = max(abs(float(p.tail(0.0))), 1e-300)
    return bool(np.min(w2) >= -tol * scale)


def energy_lower_bound(p: Potential, mu: float, volume_smeared: float) -> float:
    """``-mu^2/(2 epsilon) |Omega + B_r|`` for a stable remainder ``w_2``."""
    return -(mu**2) / (2 * p.epsilon) * volume_smeared
