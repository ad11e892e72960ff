"""Over-PINN: physics-informed networks trained on a PDE plus its differentiated residuals."""
from . import autodiff, expr, model, residuals

__version__ = "0.1.0"

__all__ = ["autodiff", "expr", "model", "residuals", "__version__"]
