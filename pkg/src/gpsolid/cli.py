"""Command line experiment runner.

Every subcommand is a thin front end over a :class:`RunConfig`; ``gpsolid run
FILE`` executes a config file directly. Each run writes its CSV files and
snapshots plus ``manifest.txt`` into the output directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    SCHEMA,
    RunConfig,
    build_potential,
    emit_csv,
    load_config,
    output_dir,
    parse_config,
    write_manifest,
)
from .errors import ConfigError, GPSolidError

FIG1_MU = (1.0, 80.0, 90.0, 150.0)
FIG1_EXTENT = 40.0
FIG1_H = 0.02


@dataclass
class RunOutcome:
    files: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(self.cells.values())


def _minimize_options(cfg: RunConfig, **extra):
    from .solver import MinimizeOptions

    keys = ("seeds", "seed_file", "multistart", "max_iters", "grad_tol", "allow_indeterminate")
    kw = {k: cfg.params[k] for k in keys if k in cfg.params}
    return MinimizeOptions(rng_seed=cfg.seed, **kw, **extra)


# --- commands -------------------------------------------------------------------------

def _run_criticality(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .criticality import criticality_report, _ratio, _scan
    from .potential import default_kgrid

    p = build_potential(cfg.potential)
    prm = cfg.params
    kgrid = None
    if "n" in prm or "kmax" in prm:
        kgrid = default_kgrid(p, prm.get("n", 4096), prm.get("kmax"))
    rep = criticality_report(p, kgrid)
    res = RunOutcome()
    res.files.append(emit_csv(out / "criticality.csv", rep.rows(), ("name", "value", "k0", "applicability")))
    if prm.get("scan"):
        k, wk, w0 = _scan(p, kgrid)
        ratio = _ratio(k * k * w0, -2.0 * wk)
        res.files.append(emit_csv(out / "scan.csv", zip(k, ratio), ("k", "ratio")))
    return res


def _grid_for(cfg: RunConfig, p):
    from .lattice import make_grid

    ext = cfg.params["extent"]
    if len(ext) == 1:
        ext = ext * p.dim
    if len(ext) != p.dim:
        raise ConfigError(f"extent has {len(ext)} entries for a {p.dim}D potential")
    return make_grid(tuple(ext), cfg.params["h"], cfg.params.get("bc", "dirichlet"), dim=p.dim)


def _run_solve(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .lattice import write_snapshot
    from .solver import minimize_canonical, minimize_grand_canonical

    p = build_potential(cfg.potential)
    grid = _grid_for(cfg, p)
    opts = _minimize_options(cfg)
    if "mu" in cfg.params:
        r = minimize_grand_canonical(p, cfg.params["mu"], grid, opts)
    else:
        r = minimize_canonical(p, cfg.params["lam"], grid, opts)
    res = RunOutcome(cells={"solve": r.converged})
    row = {
        "kind": r.kind,
        "multiplier": r.multiplier,
        "energy": r.energy,
        "free_energy": r.free_energy,
        "mass": r.mass,
        "rho": r.mean_density,
        "residual": r.residual,
        "iterations": r.iterations,
        "converged": r.converged,
        "seed": r.seed,
    }
    res.files.append(emit_csv(out / "result.csv", [row], tuple(row)))
    cand = ("label", "free_energy", "energy", "mass", "residual", "iterations", "converged")
    res.files.append(emit_csv(out / "candidates.csv", [c.__dict__ for c in r.candidates], cand))
    res.files.append(emit_csv(out / "history.csv", enumerate(r.history), ("iteration", "value")))
    res.files.append(write_snapshot(out / "field.gpsf", r.field))
    return res


def _sample_cell(s) -> str:
    return f"mu={s.mu:g},L={s.L:g},bc={s.bc},branch={s.branch}"


def _run_sweep(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from . import thermo

    p = build_potential(cfg.potential)
    prm = cfg.params
    bcs = tuple(prm.get("bc", ("dirichlet", "neumann")))
    opts = _minimize_options(cfg)
    h = prm.get("h")
    samples = thermo.sweep(p, prm["mu"], prm["L"], bcs, opts, h, jobs)
    curve = thermo.thermo_curve(p, samples)
    if prm.get("refine"):
        curve = thermo.refine_bracket(p, curve, prm["L"], bcs, opts, h, jobs=jobs)
    res = RunOutcome(cells={_sample_cell(s): s.converged for s in curve.samples})
    cols = ("mu", "L", "bc", "branch", "f", "rho", "e", "converged", "residual")
    rows = sorted(curve.samples, key=lambda s: (s.mu, s.L, s.bc, s.branch))
    res.files.append(emit_csv(out / "thermo.csv", [s.__dict__ for s in rows], cols))
    cols = ("mu", "f", "rho", "uncertainty", "f_cnst", "low_confidence")
    recs = zip(curve.mu, curve.f, curve.rho, curve.uncertainty, curve.f_cnst, curve.low_confidence)
    res.files.append(emit_csv(out / "curve.csv", recs, cols))
    leg = thermo.legendre_energy(curve.mu, curve.f)
    W = curve.integral_w
    phi = [e / r - 0.5 * r * W if r > 0 else None for r, e in zip(leg.rho, leg.e)]
    res.files.append(emit_csv(out / "legendre.csv", zip(leg.rho, leg.e, leg.mu_of_rho, phi), ("rho", "e", "mu_of_rho", "phi")))
    info = thermo.phi_and_mu_c(curve, legendre=leg)
    lo, hi = info.bracket if info.bracket else (None, None)
    summary = {
        "bracket": info.label,
        "mu_c_lower": lo,
        "mu_c_upper": hi,
        "dichotomy_consistent": info.dichotomy_consistent,
        "phi_max": float(np.max(info.phi)) if info.phi.size else None,
        **{k: v for k, v in curve.checks().items()},
        **{k: v for k, v in thermo.legendre_checks(curve, leg).items()},
    }
    res.files.append(emit_csv(out / "phase.csv", [summary], tuple(summary)))
    return res


def run_fig1(out: Path, mu_list=FIG1_MU, extent: float = FIG1_EXTENT, h: float = FIG1_H, opts=None) -> RunOutcome:
    """Built-in vdw recipe on a Dirichlet interval: one snapshot per mu and ``fig1.csv``."""
    from .criticality import instability_threshold
    from .diagnostics import oscillation, peak_period
    from .lattice import make_grid, write_snapshot
    from .potential import make_potential
    from .solver import MinimizeOptions, minimize_grand_canonical

    p = make_potential("vdw")
    k0 = instability_threshold(p)[1]
    opts = opts or MinimizeOptions()
    if opts.k0 is None:
        opts = replace(opts, k0=k0)
    grid = make_grid(extent, h, "dirichlet")
    res = RunOutcome()
    rows = []
    for mu in mu_list:
        r = minimize_grand_canonical(p, mu, grid, opts)
        pk = peak_period(r.field)
        osc = oscillation(r.field, 2 * math.pi / k0, p, mu)
        rows.append(
            {
                "mu": float(mu),
                "rho": r.mean_density,
                "peaks": pk.count,
                "period": pk.period,
                "f_L": r.free_energy / grid.volume,
                "oscillation_flag": osc.flag,
                "converged": r.converged,
            }
        )
        res.cells[f"mu={mu:g}"] = r.converged
        res.files.append(write_snapshot(out / f"fig1_mu{mu:g}.gpsf", r.field))
    res.files.append(emit_csv(out / "fig1.csv", rows, tuple(rows[0]) if rows else ("mu",)))
    return res


def _run_fig1(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .solver import MinimizeOptions

    prm = cfg.params
    return run_fig1(
        out,
        prm.get("mu", FIG1_MU),
        prm.get("extent", FIG1_EXTENT),
        prm.get("h", FIG1_H),
        MinimizeOptions(rng_seed=cfg.seed),
    )


def _run_classical(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .classical import ClassicalOptions, e_cl_estimate
    from .lattice import write_snapshot
    from .potential import integral

    p = build_potential(cfg.potential)
    prm = cfg.params
    mu = prm.get("mu", 1.0)
    est = e_cl_estimate(p, prm["L"], prm.get("h", 0.05), prm.get("bc", "neumann"), ClassicalOptions(rng_seed=cfg.seed))
    res = RunOutcome()
    rows = []
    for L, r in sorted(est.results.items()):
        vol = r.measure.grid.volume
        # quadratic scaling: the unit solution times mu
        rows.append({"L": L, "mu": mu, "F_over_volume": mu * mu * r.F / vol, "mass_over_volume": mu * r.measure.mass / vol,
                     "kkt": r.kkt, "iterations": r.iterations, "seed": r.seed, "converged": r.converged})
        res.cells[f"L={L:g}"] = r.converged
        field_ = r.measure.as_field()
        res.files.append(write_snapshot(out / f"measure_L{L:g}.gpsf", field_.with_values(mu * field_.values), tag="measure"))
    res.files.append(emit_csv(out / "classical.csv", rows, tuple(rows[0])))
    summary = {"e_cl": est.value, "uncertainty": est.uncertainty, "f_cl": est.f_cl, "half_integral_w": 0.5 * integral(p)}
    res.files.append(emit_csv(out / "ecl.csv", [summary], tuple(summary)))
    return res


def _run_vortex(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .diagnostics import momentum_density, winding_degree
    from .lattice import write_snapshot
    from .solver import solve_vortex_disk, vortex_setup

    p = build_potential(cfg.potential)
    mu, L, cells = cfg.params["mu"], cfg.params["L"], cfg.params.get("cells", 32)
    r = solve_vortex_disk(p, mu, L, _minimize_options(cfg), cells)
    vs = vortex_setup(p, mu, L, cells)
    u = r.field.values
    x, y = r.field.grid.coordinates()
    centre = int(np.argmin(x * x + y * y))
    mom = momentum_density(r.field, ((-L / 2, L / 2), (-L / 2, L / 2)))
    row = {
        "mu": mu,
        "L": L,
        "rho": vs.rho,
        "degree": winding_degree(r.field, L / 2),
        "center_density": float(abs(u.ravel()[centre]) ** 2),
        "boundary_error": float(np.max(np.abs(u[vs.ring] - vs.boundary_values[vs.ring]))),
        "momentum_x": mom[0],
        "momentum_y": mom[1],
        "energy": r.energy,
        "residual": r.residual,
        "iterations": r.iterations,
        "converged": r.converged,
    }
    res = RunOutcome(cells={"vortex": r.converged})
    res.files.append(emit_csv(out / "vortex.csv", [row], tuple(row)))
    res.files.append(write_snapshot(out / "vortex.gpsf", r.field))
    return res


def _run_diagnose(cfg: RunConfig, out: Path, jobs: int) -> RunOutcome:
    from .diagnostics import oscillation, peak_period, winding_degree
    from .errors import DegreeUndefinedError
    from .lattice import read_snapshot

    prm = cfg.params
    f, tag = read_snapshot(prm["snapshot"])
    p = build_potential(cfg.potential) if cfg.potential else None
    g = f.grid
    summary = {"snapshot": Path(prm["snapshot"]).name, "tag": tag, "dim": g.dim, "mean_density": float(np.mean(f.density[g.active]))}
    res = RunOutcome()
    if g.mask is None:
        R = prm.get("R", 10 * g.h)
        osc = oscillation(f, R, p, prm.get("mu"))
        recs = [list(c) + [a, b, v] for c, a, b, v in zip(osc.centers, osc.window_max, osc.window_min, osc.variance)]
        cols = tuple(f"x{i}" for i in range(g.dim)) + ("max", "min", "variance")
        res.files.append(emit_csv(out / "windows.csv", recs, cols))
        summary.update(R=R, min_range_sq=osc.min_range_sq, min_variance=osc.min_variance,
                       rhs=None if math.isnan(osc.rhs) else osc.rhs, oscillation_flag=osc.flag if p else None)
    if g.dim == 1:
        pk = peak_period(f)
        summary.update(peaks=pk.count, period=pk.period)
    elif g.dim == 2 and "radius" in prm:
        try:
            summary["degree"] = winding_degree(f, prm["radius"])
        except DegreeUndefinedError:
            summary["degree"] = None
    res.files.append(emit_csv(out / "summary.csv", [summary], tuple(summary)))
    return res


RUNNERS = {
    "criticality": _run_criticality,
    "solve": _run_solve,
    "sweep": _run_sweep,
    "fig1": _run_fig1,
    "classical": _run_classical,
    "vortex": _run_vortex,
    "diagnose": _run_diagnose,
}


def execute(cfg: RunConfig, jobs: int = 1, out: Path | None = None) -> tuple[RunOutcome, Path]:
    """Run ``cfg``, write its outputs and manifest, return the outcome and directory."""
    out = output_dir(out or cfg.output or f"gpsolid-out/{cfg.command}")
    t0 = time.perf_counter()
    res = RUNNERS[cfg.command](cfg, out, jobs)
    write_manifest(out, cfg, __version__, time.perf_counter() - t0, res.cells, res.files)
    return res, out


# --- argument parsing ----------------------------------------------------------------

_POTENTIAL_FLAGS = [k for k in SCHEMA["potential"] if k not in ("family", "dim")]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _add_common(sp: argparse.ArgumentParser, potential: bool = True):
    sp.add_argument("--out", help="output directory (GPSOLID_OUT takes precedence)")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    sp.add_argument("--allow-nonconverged", action="store_true", help="exit 0 even if some cell did not converge")
    if potential:
        sp.add_argument("--family", help="potential family")
        sp.add_argument("--dim", type=int, help="spatial dimension")
        sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help=f"potential parameter, KEY in {{{', '.join(_POTENTIAL_FLAGS)}}}")


def _add_solver_flags(sp):
    sp.add_argument("--seeds", choices=("constant", "constant+cosine", "random", "file"))
    sp.add_argument("--seed-file")
    sp.add_argument("--multistart", type=int)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--grad-tol", type=float)
    sp.add_argument("--allow-indeterminate", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpsolid", allow_abbrev=False, description="Nonlocal Gross-Pitaevskii ground states and phase diagrams.")
    ap.add_argument("--version", action="version", version=f"gpsolid {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("criticality", help="instability threshold and lower bounds")
    _add_common(sp)
    sp.add_argument("--n", type=int, help="wavenumbers in the scan")
    sp.add_argument("--kmax", type=float)
    sp.add_argument("--scan", action="store_true", default=None, help="also write scan.csv")

    sp = sub.add_parser("solve", help="one grand-canonical or canonical minimization")
    _add_common(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--mu", type=float)
    g.add_argument("--lam", type=float)
    sp.add_argument("--extent", type=_floats, required=True, help="box side(s), comma separated")
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--bc", choices=("dirichlet", "neumann"))
    _add_solver_flags(sp)

    sp = sub.add_parser("sweep", help="free energy over a mu grid and box sizes")
    _add_common(sp)
    sp.add_argument("--mu", type=_floats, required=True)
    sp.add_argument("--L", type=_floats, required=True)
    sp.add_argument("--bc", type=lambda s: s.split(","))
    sp.add_argument("--h", type=float)
    sp.add_argument("--refine", action="store_true", default=None, help="bisect the detected bracket")
    sp.add_argument("--multistart", type=int)

    sp = sub.add_parser("fig1", help="built-in vdw interval recipe")
    _add_common(sp, potential=False)
    sp.add_argument("--mu", type=_floats)
    sp.add_argument("--extent", type=float)
    sp.add_argument("--h", type=float)

    sp = sub.add_parser("classical", help="classical limit and e_cl")
    _add_common(sp)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--L", type=_floats, required=True)
    sp.add_argument("--h", type=float)
    sp.add_argument("--bc", choices=("dirichlet", "neumann"))

    sp = sub.add_parser("vortex", help="clamped vortex on a disk")
    _add_common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--L", type=float, required=True)
    sp.add_argument("--cells", type=int)
    _add_solver_flags(sp)

    sp = sub.add_parser("diagnose", help="order parameters of a saved snapshot")
    _add_common(sp)
    sp.add_argument("snapshot")
    sp.add_argument("--R", type=float, help="window radius")
    sp.add_argument("--mu", type=float, help="chemical potential for the oscillation bound")
    sp.add_argument("--radius", type=float, help="circle radius for the winding degree")

    sp = sub.add_parser("run", help="execute a config file")
    sp.add_argument("config")
    sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--allow-nonconverged", action="store_true")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    """Translate subcommand flags into a config; the text form is parsed so flags get the same checks as files."""
    lines = [f"command = {ns.command}", f"seed = {ns.seed}"]
    if ns.out:
        lines.append(f"output = {ns.out}")
    if getattr(ns, "family", None):
        lines.append(f"potential.family = {ns.family}")
    if getattr(ns, "dim", None) is not None:
        lines.append(f"potential.dim = {ns.dim}")
    for item in getattr(ns, "param", []):
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        lines.append(f"potential.{key.strip()} = {val.strip()}")
    for name in SCHEMA[ns.command]:
        v = getattr(ns, name, None)
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{ns.command}.{name} = {v}")
    return parse_config("\n".join(lines) + "\n")


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = load_config(ns.config) if ns.command == "run" else config_from_args(ns)
        res, out = execute(cfg, max(1, ns.jobs))
    except (GPSolidError, ValueError, OSError) as exc:
        print(f"gpsolid: error: {exc}", file=sys.stderr)
        return 1
    bad = sorted(k for k, ok in res.cells.items() if not ok)
    for f in res.files:
        print(f)
    if bad:
        print(f"gpsolid: {len(bad)} cell(s) did not converge: {', '.join(bad)}", file=sys.stderr)
        if not ns.allow_nonconverged:
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
