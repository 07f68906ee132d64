"""Finite-domain ground states, phase diagrams and critical bounds for the nonlocal Gross-Pitaevskii functional."""

__version__ = "0.1.0"

from .errors import GPSolidError
from .lattice import Field, Grid, make_grid, read_snapshot, write_snapshot
from .potential import Potential, make_potential

__all__ = [
    "Field",
    "GPSolidError",
    "Grid",
    "Potential",
    "make_grid",
    "make_potential",
    "read_snapshot",
    "write_snapshot",
    "__version__",
]
