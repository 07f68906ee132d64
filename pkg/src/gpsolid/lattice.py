"""Uniform 1D/2D grids, fields and the discrete Gross-Pitaevskii functionals.

Node layout follows the boundary condition: Dirichlet grids carry the
``N - 1`` interior vertices of ``N = extent / h`` cells (walls are implicit
zeros), Neumann grids carry the ``N`` cell centres (walls mirror the
adjacent value). The kinetic energy is the forward-difference sum over grid
edges, so ``-2 * laplacian`` is exactly its gradient.

The interaction acts on ``Omega x Omega`` only. The tail is applied as a
zero-padded FFT convolution, the Dirac part as ``contact * rho`` on the
diagonal.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .potential import Potential

BOUNDARY_CONDITIONS = ("dirichlet", "neumann")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform box grid with a boundary tag and an optional activity mask.

    Nodes outside ``mask`` are absent: they hold zero and no kinetic edge
    connects to them.
    """

    dim: int
    extents: tuple[float, ...]
    h: float
    bc: str = "dirichlet"
    origin: tuple[float, ...] | None = None
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("grids are 1D or 2D")
        ext = tuple(float(e) for e in np.atleast_1d(self.extents))
        if len(ext) == 1 and self.dim == 2:
            ext = ext * 2
        if len(ext) != self.dim:
            raise ValueError("one extent per axis required")
        object.__setattr__(self, "extents", ext)
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"boundary condition must be one of {BOUNDARY_CONDITIONS}")
        cells = []
        for e in ext:
            n = e / self.h
            if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 2:
                raise ValueError(f"extent {e} is not an integral multiple (>= 2) of h={self.h}")
            cells.append(int(round(n)))
        object.__setattr__(self, "cells", tuple(cells))
        origin = (0.0,) * self.dim if self.origin is None else tuple(float(o) for o in self.origin)
        object.__setattr__(self, "origin", origin)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != self.shape:
                raise ValueError("mask shape does not match the node layout")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, ...]:
        off = 1 if self.bc == "dirichlet" else 0
        return tuple(c - off for c in self.cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, i: int) -> np.ndarray:
        idx = np.arange(self.shape[i], dtype=float)
        shift = 1.0 if self.bc == "dirichlet" else 0.5
        return self.origin[i] + (idx + shift) * self.h

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij"))

    @property
    def active(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool) if self.mask is None else self.mask

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        if self.mask is None:
            return float(np.prod(self.extents))
        return float(self.active.sum()) * self.cell_volume

    def smeared_volume(self, r: float) -> float:
        """``|Omega + B_r|`` for the box (Steiner formula)."""
        if self.dim == 1:
            return self.extents[0] + 2 * r
        a, b = self.extents
        return a * b + 2 * r * (a + b) + math.pi * r * r

    def interior_margin(self) -> float:
        """Boundary-layer width excluded from bulk statistics."""
        return min(5.0, min(self.extents) / 8)


def make_grid(extent, h: float, bc: str = "dirichlet", dim: int | None = None, origin=None) -> Grid:
    ext = tuple(np.atleast_1d(np.asarray(extent, dtype=float)))
    return Grid(dim=dim or len(ext), extents=ext, h=h, bc=bc, origin=origin)


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a real or complex order parameter on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            v = v.astype(np.complex128)
        else:
            v = v.astype(np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or infinite entries")
        object.__setattr__(self, "values", v)

    @property
    def scalar_type(self) -> str:
        return "complex" if np.iscomplexobj(self.values) else "real"

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def mass(self) -> float:
        return float(np.sum(self.density) * self.grid.cell_volume)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)


class Discretization:
    """Array-level operators for one (grid, potential) pair."""

    def __init__(self, grid: Grid, potential: Potential):
        if potential.dim != grid.dim:
            raise ValueError("potential and grid dimensions differ")
        self.grid = grid
        self.potential = potential
        self.h = grid.h
        self.dV = grid.cell_volume
        self.active = grid.active
        self._edge_active = [self._edges(a) for a in range(grid.dim)]
        self._fft_shape = tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in grid.shape)
        self._kernel_hat = sfft.rfftn(self._kernel(), s=self._fft_shape) if potential.has_tail else None
        self._eig = self._laplacian_eigenvalues()

    # -- geometry ---------------------------------------------------------

    def _edges(self, axis: int) -> np.ndarray:
        act = self.active
        ghost = self.grid.bc == "dirichlet"
        pad = [(0, 0)] * self.grid.dim
        pad[axis] = (1, 1)
        padded = np.pad(act, pad, constant_values=ghost)
        lo = [slice(None)] * self.grid.dim
        hi = [slice(None)] * self.grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        edges = padded[tuple(lo)] & padded[tuple(hi)]
        # an edge needs at least one real node
        inner = np.pad(act, pad, constant_values=False)
        return edges & (inner[tuple(lo)] | inner[tuple(hi)])

    def _kernel(self) -> np.ndarray:
        """Tail sampled on all node offsets, laid out for cyclic convolution."""
        axes = []
        for n, m in zip(self.grid.shape, self._fft_shape):
            off = np.arange(m)
            off = np.where(off < n, off, off - m)  # wrap negative offsets
            axes.append(off * self.h)
        mesh = np.meshgrid(*axes, indexing="ij")
        dist = np.sqrt(sum(x * x for x in mesh))
        kern = self.potential.tail(dist)
        # zero the padding gap so that wrap-around never couples nodes
        for ax, (n, m) in enumerate(zip(self.grid.shape, self._fft_shape)):
            off = np.arange(m)
            gap = (off >= n) & (off <= m - n)
            idx = [slice(None)] * self.grid.dim
            idx[ax] = gap
            kern[tuple(idx)] = 0.0
        return kern

    def _laplacian_eigenvalues(self) -> np.ndarray:
        lams = []
        for N in self.grid.cells:
            j = np.arange(1, N) if self.grid.bc == "dirichlet" else np.arange(N)
            lams.append((2 - 2 * np.cos(np.pi * j / N)) / self.h**2)
        mesh = np.meshgrid(*lams, indexing="ij")
        return sum(mesh)

    # -- linear pieces ------------------------------------------------------

    def edge_diffs(self, u: np.ndarray) -> list[np.ndarray]:
        out = []
        for axis in range(self.grid.dim):
            pad = [(0, 0)] * self.grid.dim
            pad[axis] = (1, 1)
            d = np.diff(np.pad(u, pad), axis=axis)
            out.append(d * self._edge_active[axis])
        return out

    def kinetic(self, u: np.ndarray) -> float:
        return self.h ** (self.grid.dim - 2) * float(sum(np.sum(np.abs(d) ** 2) for d in self.edge_diffs(u)))

    def kinetic_cross(self, u: np.ndarray, v: np.ndarray) -> float:
        """``Re <grad u, grad v>`` in the discrete kinetic form."""
        s = 0.0
        for du, dv in zip(self.edge_diffs(u), self.edge_diffs(v)):
            s += float(np.sum((np.conj(du) * dv).real))
        return self.h ** (self.grid.dim - 2) * s

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for axis, d in enumerate(self.edge_diffs(u)):
            out = out + np.diff(d, axis=axis)
        return out * self.active / self.h**2

    def convolve_tail(self, rho: np.ndarray) -> np.ndarray:
        """``h^d sum_j tail(x_i - x_j) rho_j`` restricted to the grid."""
        if self._kernel_hat is None:
            return np.zeros(self.grid.shape)
        rho = np.asarray(rho, dtype=float) * self.active
        full = sfft.irfftn(sfft.rfftn(rho, s=self._fft_shape) * self._kernel_hat, s=self._fft_shape)
        return full[tuple(slice(0, n) for n in self.grid.shape)] * self.dV * self.active

    def convolve_tail_direct(self, rho: np.ndarray) -> np.ndarray:
        coords = np.stack([c.ravel() for c in self.grid.coordinates()], axis=1)
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        rho = (np.asarray(rho, dtype=float) * self.active).ravel()
        out = self.potential.tail(dist) @ rho
        return out.reshape(self.grid.shape) * self.dV * self.active

    def apply_w(self, sigma: np.ndarray) -> np.ndarray:
        """Discrete ``w * sigma`` including the contact term."""
        return self.convolve_tail(sigma) + self.potential.contact * sigma * self.active

    # -- functionals ----------------------------------------------------------

    def sigma(self, u: np.ndarray, background: float = 0.0) -> np.ndarray:
        return (np.abs(u) ** 2 - background) * self.active

    def mass(self, u: np.ndarray) -> float:
        return float(np.sum(np.abs(u) ** 2 * self.active)) * self.dV

    def interaction(self, u: np.ndarray, background: float = 0.0, w_sigma=None) -> float:
        s = self.sigma(u, background)
        ws = self.apply_w(s) if w_sigma is None else w_sigma
        return 0.5 * self.dV * float(np.sum(s * ws))

    def energy(self, u: np.ndarray, background: float = 0.0) -> float:
        return self.kinetic(u) + self.interaction(u, background)

    def free_energy(self, u: np.ndarray, mu: float, background: float = 0.0) -> float:
        return self.energy(u, background) - mu * self.mass(u)

    def gp_operator(self, u: np.ndarray, mu: float, background: float = 0.0, w_sigma=None):
        """``(-Delta + w * (|u|^2 - background) - mu) u`` on active nodes."""
        ws = self.apply_w(self.sigma(u, background)) if w_sigma is None else w_sigma
        return (-self.laplacian(u) + (ws - mu) * u) * self.active

    def gradient(self, u: np.ndarray, mu: float, background: float = 0.0, w_sigma=None):
        return 2.0 * self.gp_operator(u, mu, background, w_sigma)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.dV * float(np.sum((np.conj(a) * b).real))

    def line_polynomial(self, u, d, mu: float, background: float, w_sigma0) -> np.ndarray:
        """Coefficients ``[c1, c2, c3, c4]`` of ``F(u + t d) - F(u)``.

        The free energy is a quartic along any line, so the increment is
        exact and free of cancellation.
        """
        act = self.active
        s1 = 2.0 * (np.conj(u) * d).real * act
        s2 = np.abs(d) ** 2 * act
        ws1 = self.apply_w(s1)
        ws2 = self.apply_w(s2)
        dV = self.dV
        c1 = 2 * self.kinetic_cross(u, d) - 2 * mu * self.inner(u, d) + dV * float(np.sum(s1 * w_sigma0))
        c2 = (
            self.kinetic(d)
            - mu * self.mass(d)
            + dV * (0.5 * float(np.sum(s1 * ws1)) + float(np.sum(s2 * w_sigma0)))
        )
        c3 = dV * float(np.sum(s1 * ws2))
        c4 = 0.5 * dV * float(np.sum(s2 * ws2))
        return np.array([c1, c2, c3, c4])

    # -- preconditioning ------------------------------------------------------

    def precondition(self, g: np.ndarray, shift: float) -> np.ndarray:
        """Solve ``2 (-Delta + shift) z = g`` on the full box, then mask."""
        if self.grid.bc == "dirichlet":
            gh = sfft.dstn(g, type=1, norm="ortho")
            z = sfft.idstn(gh / (2.0 * (self._eig + shift)), type=1, norm="ortho")
        else:
            gh = sfft.dctn(g, type=2, norm="ortho")
            z = sfft.idctn(gh / (2.0 * (self._eig + shift)), type=2, norm="ortho")
        return z * self.active


@functools.lru_cache(maxsize=16)
def discretization(grid: Grid, potential: Potential) -> Discretization:
    return Discretization(grid, potential)


# --- field-level API -------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _contact_only(dim: int) -> Potential:
    from .potential import make_potential

    return make_potential("pure-contact", dim=dim)


def laplacian_apply(f: Field) -> Field:
    """Second-order stencil Laplacian with the grid's boundary handling."""
    return f.with_values(discretization(f.grid, _contact_only(f.grid.dim)).laplacian(f.values))


def interaction_field(p: Potential, density: Field, method: str = "fft", include_contact: bool = True) -> Field:
    """Discrete ``w * rho`` over the grid (no wrap-around)."""
    rho = np.real(density.values).astype(float)
    if np.iscomplexobj(density.values) and np.any(np.imag(density.values) != 0):
        raise ValueError("density must be real")
    if np.min(rho) < -1e-12:
        raise ValueError("density has negative entries")
    disc = discretization(density.grid, p)
    if method == "fft":
        out = disc.convolve_tail(rho)
    elif method == "direct":
        out = disc.convolve_tail_direct(rho)
    else:
        raise ValueError("method must be 'fft' or 'direct'")
    if include_contact:
        out = out + p.contact * rho * density.grid.active
    return Field(density.grid, out)


def energy(f: Field, p: Potential) -> float:
    """Kinetic plus pair-interaction energy on the grid."""
    return discretization(f.grid, p).energy(f.values)


def free_energy(f: Field, p: Potential, mu: float) -> float:
    return discretization(f.grid, p).free_energy(f.values, mu)


def gp_gradient(f: Field, p: Potential, mu: float) -> Field:
    """L^2_h gradient of the free energy: ``2 (-Delta + w * |u|^2 - mu) u``."""
    return f.with_values(discretization(f.grid, p).gradient(f.values, mu))


def gp_residual(f: Field, p: Potential, mu: float, free: np.ndarray | None = None) -> float:
    """Sup-norm of the GP operator applied to ``f`` over free nodes."""
    r = np.abs(discretization(f.grid, p).gp_operator(f.values, mu))
    if free is not None:
        r = r[free]
    return float(np.max(r)) if r.size else 0.0


# --- snapshots -------------------------------------------------------------------

_MAGIC = b"GPSF"
_VERSION = 1
_TAGS = {"real": 0, "complex": 1, "measure": 2}
_BCS = {"dirichlet": 0, "neumann": 1}


def write_snapshot(path, f: Field, tag: str | None = None) -> Path:
    """Binary snapshot: little-endian header then row-major float64 data.

    Header: magic, version, d, bc, scalar tag, has-mask (uint32 each), node
    counts (uint64 per axis), extents, origin (float64 per axis), h. Complex
    data is stored as interleaved (re, im) pairs. A mask, when present,
    follows the data as one byte per node.
    """
    tag = tag or f.scalar_type
    g = f.grid
    head = struct.pack(
        "<4s5I", _MAGIC, _VERSION, g.dim, _BCS[g.bc], _TAGS[tag], int(g.mask is not None)
    )
    head += struct.pack(f"<{g.dim}Q", *g.shape)
    head += struct.pack(f"<{2 * g.dim + 1}d", *g.extents, *g.origin, g.h)
    v = f.values
    data = np.ascontiguousarray(v.view(np.float64) if np.iscomplexobj(v) else v, dtype="<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(data.tobytes(order="C"))
        if g.mask is not None:
            fh.write(np.ascontiguousarray(g.mask, dtype=np.uint8).tobytes())
    return path


def read_snapshot(path) -> tuple[Field, str]:
    raw = Path(path).read_bytes()
    magic, version, dim, bc, tag, has_mask = struct.unpack_from("<4s5I", raw, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a gpsolid snapshot")
    off = struct.calcsize("<4s5I")
    shape = struct.unpack_from(f"<{dim}Q", raw, off)
    off += 8 * dim
    floats = struct.unpack_from(f"<{2 * dim + 1}d", raw, off)
    off += 8 * (2 * dim + 1)
    extents, origin, h = floats[:dim], floats[dim : 2 * dim], floats[-1]
    n = int(np.prod(shape))
    tag_name = {v: k for k, v in _TAGS.items()}[tag]
    count = 2 * n if tag_name == "complex" else n
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
    off += 8 * count
    values = data.view(np.complex128) if tag_name == "complex" else data
    mask = None
    if has_mask:
        mask = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).astype(bool).reshape(shape)
    bc_name = {v: k for k, v in _BCS.items()}[bc]
    grid = Grid(dim=dim, extents=extents, h=h, bc=bc_name, origin=origin, mask=mask)
    return Field(grid, values.reshape(shape)), tag_name


def export_text(path, f: Field) -> Path:
    """Whitespace-separated columns: coordinates then value (or re, im)."""
    coords = [c.ravel() for c in f.grid.coordinates()]
    v = f.values.ravel()
    cols = coords + ([v.real, v.imag] if np.iscomplexobj(v) else [v])
    path = Path(path)
    np.savetxt(path, np.column_stack(cols), fmt="%.17g")
    return path
