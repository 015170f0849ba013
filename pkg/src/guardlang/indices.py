"""The index constraint domain: linear integer expressions over `int`.

Provides sorting of index expressions under a context, entailment of index
propositions (equality and inequalities) by Fourier-Motzkin elimination over
the rationals, and isolation of a single metavariable from an equality
constraint.

Entailment soundness: a reported entailment holds for every integer
assignment (integers are a subset of the rationals, and strict inequalities
are negated with the integer shift-by-one encoding).  The procedure is
incomplete for integer-only facts such as the unsatisfiability of 2a = 1;
the type system only needs linear equalities, where this never bites.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .syntax import (
    Context,
    Eq,
    IAdd,
    ILit,
    IMeta,
    IMul,
    INT,
    ISub,
    IVar,
    IndexExpr,
    IndexProp,
    IndexSort,
    Le,
    Lt,
)

# Keys of a linear form: ("v", name) for index variables, ("m", uid) for
# metavariables.  Tuples keep the two namespaces apart and order canonically.
Key = tuple[str, Union[str, int]]


class UnboundIndexVariable(Exception):
    def __init__(self, name: str) -> None:
        super().__init__(f"unbound index variable '{name}'")
        self.name = name


@dataclass(frozen=True)
class LinearForm:
    """Canonical sum of coefficient * variable plus a constant.

    Terms are sorted by key and never carry zero coefficients, so two forms
    denote the same function iff they are equal.
    """

    terms: tuple[tuple[Key, int], ...]
    const: int

    @staticmethod
    def from_dict(coeffs: dict[Key, int], const: int) -> LinearForm:
        items = tuple(sorted((k, c) for k, c in coeffs.items() if c != 0))
        return LinearForm(items, const)

    def coeffs(self) -> dict[Key, int]:
        return dict(self.terms)

    def add(self, other: LinearForm) -> LinearForm:
        acc = self.coeffs()
        for k, c in other.terms:
            acc[k] = acc.get(k, 0) + c
        return LinearForm.from_dict(acc, self.const + other.const)

    def scale(self, factor: int) -> LinearForm:
        if factor == 0:
            return LinearForm((), 0)
        return LinearForm(
            tuple((k, c * factor) for k, c in self.terms), self.const * factor
        )

    def sub(self, other: LinearForm) -> LinearForm:
        return self.add(other.scale(-1))

    def keys(self) -> frozenset[Key]:
        return frozenset(k for k, _ in self.terms)

    def is_const(self) -> bool:
        return not self.terms


def normalize(i: IndexExpr) -> LinearForm:
    """Semantics-preserving canonical form of a linear index expression."""
    match i:
        case IVar(name):
            return LinearForm.from_dict({("v", name): 1}, 0)
        case IMeta(uid):
            return LinearForm.from_dict({("m", uid): 1}, 0)
        case ILit(value):
            return LinearForm((), value)
        case IAdd(l, r):
            return normalize(l).add(normalize(r))
        case ISub(l, r):
            return normalize(l).sub(normalize(r))
        case IMul(c, f):
            return normalize(f).scale(c)
    raise TypeError(f"normalize: unexpected {i!r}")


def linear_to_expr(lf: LinearForm) -> IndexExpr:
    """Rebuild an index expression from a linear form (canonical shape)."""
    expr: Optional[IndexExpr] = None
    for key, coeff in lf.terms:
        base: IndexExpr = IVar(key[1]) if key[0] == "v" else IMeta(key[1])
        part = base if coeff == 1 else IMul(coeff, base)
        expr = part if expr is None else IAdd(expr, part)
    if lf.const != 0 or expr is None:
        lit = ILit(lf.const)
        expr = lit if expr is None else IAdd(expr, lit)
    return expr


def eval_index(i: IndexExpr, env: dict[str, int]) -> int:
    """Evaluate a metavariable-free index expression under an assignment."""
    match i:
        case IVar(name):
            return env[name]
        case ILit(value):
            return value
        case IAdd(l, r):
            return eval_index(l, env) + eval_index(r, env)
        case ISub(l, r):
            return eval_index(l, env) - eval_index(r, env)
        case IMul(c, f):
            return c * eval_index(f, env)
        case IMeta(uid):
            raise ValueError(f"eval_index: unsolved metavariable ?{uid}")
    raise TypeError(f"eval_index: unexpected {i!r}")


def eval_prop(p: IndexProp, env: dict[str, int]) -> bool:
    match p:
        case Eq(l, r):
            return eval_index(l, env) == eval_index(r, env)
        case Le(l, r):
            return eval_index(l, env) <= eval_index(r, env)
        case Lt(l, r):
            return eval_index(l, env) < eval_index(r, env)
    raise TypeError(f"eval_prop: unexpected {p!r}")


def sort_of(ctx: Context, i: IndexExpr) -> IndexSort:
    """Sort of an index expression; every variable must be declared in ctx."""
    match i:
        case IVar(name):
            sort = ctx.lookup_index(name)
            if sort is None:
                raise UnboundIndexVariable(name)
            return sort
        case IMeta(uid):
            if ctx.metas is None or uid not in ctx.metas:
                raise UnboundIndexVariable(f"?{uid}")
            return ctx.metas.sort_of(uid)
        case ILit(_):
            return INT
        case IAdd(l, r) | ISub(l, r):
            sort_of(ctx, l)
            sort_of(ctx, r)
            return INT
        case IMul(_, f):
            sort_of(ctx, f)
            return INT
    raise TypeError(f"sort_of: unexpected {i!r}")


# ---------------------------------------------------------------------------
# Entailment by Fourier-Motzkin elimination

FracForm = tuple[dict[Key, Fraction], Fraction]  # meaning: sum + const <= 0


def _to_frac(lf: LinearForm) -> FracForm:
    return ({k: Fraction(c) for k, c in lf.terms}, Fraction(lf.const))


def _le_zero(lhs: IndexExpr, rhs: IndexExpr, shift: int = 0) -> FracForm:
    # lhs - rhs + shift <= 0
    lf = normalize(lhs).sub(normalize(rhs))
    coeffs, const = _to_frac(lf)
    return coeffs, const + shift


def _prop_constraints(p: IndexProp) -> list[FracForm]:
    match p:
        case Eq(l, r):
            return [_le_zero(l, r), _le_zero(r, l)]
        case Le(l, r):
            return [_le_zero(l, r)]
        case Lt(l, r):
            # Strict over the integers: l < r  iff  l + 1 <= r.
            return [_le_zero(l, r, shift=1)]
    raise TypeError(f"_prop_constraints: unexpected {p!r}")


def _negation_disjuncts(p: IndexProp) -> list[list[FracForm]]:
    match p:
        case Eq(l, r):
            return [[_le_zero(l, r, shift=1)], [_le_zero(r, l, shift=1)]]
        case Le(l, r):
            return [[_le_zero(r, l, shift=1)]]
        case Lt(l, r):
            return [[_le_zero(r, l)]]
    raise TypeError(f"_negation_disjuncts: unexpected {p!r}")


def _fm_unsat(constraints: list[FracForm]) -> bool:
    """True iff the conjunction of `form <= 0` constraints has no rational
    solution, by eliminating variables one at a time."""
    system = [(dict(c), k) for c, k in constraints]
    while True:
        keys: set[Key] = set()
        for coeffs, _ in system:
            keys.update(k for k, v in coeffs.items() if v != 0)
        if not keys:
            break
        var = sorted(keys)[0]
        uppers: list[FracForm] = []  # positive coefficient on var
        lowers: list[FracForm] = []  # negative coefficient
        rest: list[FracForm] = []
        for coeffs, const in system:
            c = coeffs.get(var, Fraction(0))
            if c > 0:
                uppers.append((coeffs, const))
            elif c < 0:
                lowers.append((coeffs, const))
            else:
                rest.append((coeffs, const))
        new_system = rest
        for ucoeffs, uconst in uppers:
            for lcoeffs, lconst in lowers:
                cu = ucoeffs[var]
                cl = -lcoeffs[var]
                combined: dict[Key, Fraction] = {}
                for k, v in ucoeffs.items():
                    if k != var:
                        combined[k] = combined.get(k, Fraction(0)) + v * cl
                for k, v in lcoeffs.items():
                    if k != var:
                        combined[k] = combined.get(k, Fraction(0)) + v * cu
                const = uconst * cl + lconst * cu
                new_system.append((combined, const))
        system = new_system
    return any(const > 0 for _, const in system)


def entails(
    ctx: Context, hyps: Sequence[IndexProp], goal: IndexProp
) -> bool:
    """Does the conjunction of hypotheses entail the goal?

    Valid over the rationals (with integer-shifted strict inequalities),
    hence sound for every integer assignment.  Total and deterministic.
    """
    hyp_constraints: list[FracForm] = []
    for h in hyps:
        hyp_constraints.extend(_prop_constraints(h))
    return all(
        _fm_unsat(hyp_constraints + disjunct)
        for disjunct in _negation_disjuncts(goal)
    )


# ---------------------------------------------------------------------------
# Metavariable solving


class NoSolution(Exception):
    pass


def solve_meta(ctx: Context, constraint: IndexProp) -> tuple[int, IndexExpr]:
    """Isolate the single unsolved metavariable of an equality constraint.

    Returns (uid, solution).  The solution exists when the metavariable's
    coefficient divides every other coefficient and the constant, and it must
    mention only index variables that were in scope when the metavariable was
    introduced.  Raises NoSolution otherwise.
    """
    if not isinstance(constraint, Eq):
        raise NoSolution("only equality constraints can be solved")
    lf = normalize(constraint.lhs).sub(normalize(constraint.rhs))
    store = ctx.metas
    meta_keys = [
        k
        for k in lf.keys()
        if k[0] == "m"
        and (store is None or store.solution(k[1]) is None)
    ]
    if len(meta_keys) != 1:
        raise NoSolution(
            f"expected exactly one unsolved metavariable, found {len(meta_keys)}"
        )
    mkey = meta_keys[0]
    uid = mkey[1]
    assert isinstance(uid, int)
    coeffs = lf.coeffs()
    c = coeffs.pop(mkey)
    # c * m + rest + const = 0  =>  m = -(rest + const) / c
    solved: dict[Key, int] = {}
    for k, v in coeffs.items():
        if v % c != 0:
            raise NoSolution(
                f"coefficient {c} does not divide {v} symbolically"
            )
        solved[k] = -(v // c)
    if lf.const % c != 0:
        raise NoSolution(
            f"coefficient {c} does not divide constant {lf.const}"
        )
    const = -(lf.const // c)
    solution_lf = LinearForm.from_dict(solved, const)
    if any(k[0] == "m" for k in solution_lf.keys()):
        raise NoSolution("solution still mentions a metavariable")
    if store is not None:
        scope = store.scope_of(uid)
        out = {k[1] for k in solution_lf.keys() if k[0] == "v"} - scope
        if out:
            raise NoSolution(
                "solution mentions variables bound after the metavariable: "
                + ", ".join(sorted(str(v) for v in out))
            )
    return uid, linear_to_expr(solution_lf)
