"""Stratified Datalog with arithmetic and time-indexed local stratification."""
from .evaluate import Model, UnknownPredicate, evaluate, query
from .program import Comparison, ParseError, Program, Rule, UnsafeRuleError, parse_program
from .stratify import StrataPlan, Stratum, UnstratifiableError, stratify
from .terms import (
    ArithmeticOverflow,
    EngineError,
    ResourceLimitExceeded,
    Var,
    format_atom,
    format_term,
)

__all__ = [
    "ArithmeticOverflow",
    "Comparison",
    "EngineError",
    "Model",
    "ParseError",
    "Program",
    "ResourceLimitExceeded",
    "Rule",
    "StrataPlan",
    "Stratum",
    "UnknownPredicate",
    "UnsafeRuleError",
    "UnstratifiableError",
    "Var",
    "evaluate",
    "format_atom",
    "format_term",
    "parse_program",
    "query",
    "stratify",
]
