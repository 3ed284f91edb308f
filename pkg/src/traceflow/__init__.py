"""Large-N Segal-Bargmann transform on U(N): trace-polynomial calculus, heat
semigroup, finite-N Laplacian oracle, and heat-kernel Monte Carlo."""

from .coeffs import TPoly
from .errors import CapExceededError, DomainError, NumericError, TraceflowError, UsageError
from .heat_engine import (
    HeatPolynomial,
    HomogeneousBlock,
    SingleVariablePolynomial,
    build_block,
    evaluate_traces_one,
    free_hall_transform,
    heat_apply,
    holomorphic_extend,
    moment_nu,
)
from .trace_algebra import (
    TraceMonomial,
    TracePolynomial,
    canonicalize,
    laplacian_leading,
    laplacian_power,
    laplacian_traced_power,
    multiply,
    trace_close,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceededError", "DomainError", "HeatPolynomial", "HomogeneousBlock", "NumericError",
    "SingleVariablePolynomial", "TPoly", "TraceMonomial", "TracePolynomial", "TraceflowError",
    "UsageError", "build_block", "canonicalize", "evaluate_traces_one", "free_hall_transform",
    "heat_apply", "holomorphic_extend", "laplacian_leading", "laplacian_power",
    "laplacian_traced_power", "moment_nu", "multiply", "trace_close",
]
