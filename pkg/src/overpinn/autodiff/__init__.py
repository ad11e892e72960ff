from . import kernels, tape
from .engine import (GradientVector, Jet, NonFiniteError, fd_partial, finite_difference_partials,
                     input_gradient, jet_batch, jet_eval, loss_gradient)
from .jets import IndexSet

__all__ = [
    "GradientVector", "IndexSet", "Jet", "NonFiniteError", "fd_partial",
    "finite_difference_partials", "input_gradient", "jet_batch", "jet_eval", "kernels",
    "loss_gradient", "tape",
]
