from .core import (Deriv, Expression, NonlinearPatternError, Param, bind, canonicalize,
                   differentiate, linear_combination, make_index, orient, required_orders,
                   substitute)
from .parser import Context, ParseError, parse, to_text
from .system import (EliminationResult, NonlinearTargetError, PDESystem, SystemError_,
                     apply_constraints, apply_definitions, derive_auxiliary, eliminate,
                     eliminate_and_reduce, load, loads)

__all__ = [
    "Context", "Deriv", "EliminationResult", "Expression", "NonlinearPatternError",
    "NonlinearTargetError", "PDESystem", "Param", "ParseError", "SystemError_",
    "apply_constraints", "apply_definitions", "bind", "canonicalize", "derive_auxiliary",
    "differentiate", "eliminate", "eliminate_and_reduce", "linear_combination", "load",
    "loads", "make_index", "orient", "parse", "required_orders", "substitute", "to_text",
]
