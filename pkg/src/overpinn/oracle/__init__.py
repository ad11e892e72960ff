"""Reference solutions used as ground truth."""
from .allen_cahn import BlowUpError, grid, initial_profile, solve_allen_cahn
from .navier_stokes import (InitialField, Spectral, generate_initial_vorticity, grid_coordinates,
                            solve_ns_vorticity, spectral_interpolate, taylor_green)
from .series import FieldSeries, Grid2D, SeriesFormatError, downsample

__all__ = [
    "BlowUpError", "FieldSeries", "Grid2D", "InitialField", "SeriesFormatError", "Spectral",
    "downsample", "generate_initial_vorticity", "grid", "grid_coordinates", "initial_profile",
    "solve_allen_cahn", "solve_ns_vorticity", "spectral_interpolate", "taylor_green",
]
