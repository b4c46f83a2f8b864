"""Symbolic and numerical toolkit for the quantum complex plane O(C_q^n)."""

from .qalgebra import LaurentQ, QPolynomial, normal_form, parse_expr, star, verify_identity
from .opkernel import SparseOperator, operator_norm_lb
from .qrep import FiberSpectrum, MeasureSpec, RepComponent, TruncationSpec, verify_relations
from .qcstar import CrossedSymbol, FunctionExpr, GeneratorTerm, parse_function, pi_k, represent

__version__ = "0.1.0"

__all__ = [
    "LaurentQ",
    "QPolynomial",
    "normal_form",
    "parse_expr",
    "star",
    "verify_identity",
    "SparseOperator",
    "operator_norm_lb",
    "FiberSpectrum",
    "MeasureSpec",
    "RepComponent",
    "TruncationSpec",
    "verify_relations",
    "CrossedSymbol",
    "FunctionExpr",
    "GeneratorTerm",
    "parse_function",
    "pi_k",
    "represent",
]
