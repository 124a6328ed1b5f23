"""Satisfiability checking and model generation for HyperLTL via QBF encodings."""

from .formula import (
    Formula, FormulaError, LassoTrace, Model, ParseError, Quant, QuantGroup,
    conjoin, evaluate, lasso, negate, nnf, normalize, parse, print_formula,
)
from .engine import Budget, Sat, Unknown, check_equiv, check_sat, find_nonimplication
from .solve import BackendConfig

__all__ = [
    "BackendConfig", "Budget", "Formula", "FormulaError", "LassoTrace", "Model", "ParseError",
    "Quant", "QuantGroup", "Sat", "Unknown", "check_equiv", "check_sat", "conjoin", "evaluate",
    "find_nonimplication", "lasso", "negate", "nnf", "normalize", "parse", "print_formula",
]
__version__ = "0.1.0"
