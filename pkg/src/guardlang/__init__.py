"""guardlang: a typechecker and interpreter for a small functional language
with intersection types, guard annotations, merges and indexed types."""

from .syntax import (
    Anno,
    App,
    Context,
    CtxAnno,
    CtxTyping,
    Guard,
    IdxDecl,
    IdxLam,
    Lam,
    Merge,
    MetaStore,
    Prim,
    Program,
    Signature,
    Some,
    Term,
    Type,
    Unit,
    Var,
    VarDecl,
    alpha_eq,
)
from .parser import parse_program, parse_term, parse_type, pretty, ParseError
from .subtyping import subtype, Fail
from .typecheck import Checker, Report, typecheck_program
from .ctxanno import encode, encode_program, verify_encoding
from .interp import erase, evaluate, step, step_all

__version__ = "0.1.0"

__all__ = [
    "Anno",
    "App",
    "Checker",
    "Context",
    "CtxAnno",
    "CtxTyping",
    "Fail",
    "Guard",
    "IdxDecl",
    "IdxLam",
    "Lam",
    "Merge",
    "MetaStore",
    "ParseError",
    "Prim",
    "Program",
    "Report",
    "Signature",
    "Some",
    "Term",
    "Type",
    "Unit",
    "Var",
    "VarDecl",
    "alpha_eq",
    "encode",
    "encode_program",
    "erase",
    "evaluate",
    "parse_program",
    "parse_term",
    "parse_type",
    "pretty",
    "step",
    "step_all",
    "subtype",
    "typecheck_program",
    "verify_encoding",
]
