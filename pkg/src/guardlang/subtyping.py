"""Subtyping: decide `ctx |- A <= B`, producing a replayable derivation.

The search tries invertible rules first (intersection-right, Pi-right), then
reflexivity / declared atom order, the arrow rule, indexed-constructor
equality, the two intersection-left projections, and finally Pi-left.
Pi-left introduces a metavariable for the instantiation witness and lets the
indexed-constructor equality solve it; a derivation that completes with the
witness unsolved fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from . import indices
from .indices import NoSolution, UnboundIndexVariable, entails, solve_meta
from .syntax import (
    Context,
    Decl,
    Eq,
    IVar,
    IdxDecl,
    IndexExpr,
    MetaStore,
    Span,
    TAtom,
    TArrow,
    TCon,
    TPi,
    TSect,
    Type,
    alpha_eq,
    fresh_name,
    free_index_vars,
    subst_index_in_type,
    zonk_index,
    zonk_type,
)


@dataclass(frozen=True)
class Fail:
    """A failed goal, with the failed subgoals that explain it."""

    reason: str
    span: Optional[Span] = None
    parts: tuple["Fail", ...] = ()

    def walk(self) -> list["Fail"]:
        out: list[Fail] = [self]
        for p in self.parts:
            out.extend(p.walk())
        return out

    def leaves(self) -> list["Fail"]:
        if not self.parts:
            return [self]
        out: list[Fail] = []
        for p in self.parts:
            out.extend(p.leaves())
        return out

    def messages(self) -> list[str]:
        seen: set[str] = set()
        out: list[str] = []
        for node in self.walk():
            if node.reason not in seen:
                seen.add(node.reason)
                out.append(node.reason)
        return out

    def __str__(self) -> str:
        return self.reason


class DepthExceeded(Exception):
    pass


class VerifyError(Exception):
    pass


@dataclass(frozen=True)
class SubDerivation:
    rule: str
    ctx_entries: tuple[Decl, ...]
    lhs: Type
    rhs: Type
    premises: tuple["SubDerivation", ...] = ()
    witness: Optional[IndexExpr] = None

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)

    def zonked(self, store: MetaStore) -> "SubDerivation":
        return SubDerivation(
            self.rule,
            tuple(_zonk_decl(store, d) for d in self.ctx_entries),
            zonk_type(store, self.lhs),
            zonk_type(store, self.rhs),
            tuple(p.zonked(store) for p in self.premises),
            zonk_index(store, self.witness) if self.witness is not None else None,
        )


def _zonk_decl(store: MetaStore, d: Decl):
    from .syntax import VarDecl

    if isinstance(d, VarDecl):
        return VarDecl(d.name, zonk_type(store, d.ty), span=d.span)
    return d


@dataclass
class Stats:
    rule_applications: int = 0
    backtracks: int = 0
    subtype_queries: int = 0
    entailment_queries: int = 0
    wall_ms: float = 0.0

    def as_dict(self) -> dict:
        return {
            "rule_applications": self.rule_applications,
            "backtracks": self.backtracks,
            "subtype_queries": self.subtype_queries,
            "entailment_queries": self.entailment_queries,
            "wall_ms": round(self.wall_ms, 3),
        }


class _Search:
    def __init__(self, store: MetaStore, stats: Stats, budget: int) -> None:
        self.store = store
        self.stats = stats
        self.budget = budget
        # Per-query memo; entries are only written when the subgoal touched
        # no metavariables, so a hit is always state-independent.
        self.memo: dict = {}

    def tick(self) -> None:
        self.stats.rule_applications += 1
        self.budget -= 1
        if self.budget < 0:
            raise DepthExceeded()

    def entails(self, ctx: Context, hyps, goal) -> bool:
        self.stats.entailment_queries += 1
        return entails(ctx, hyps, goal)

    def sub(self, ctx: Context, a: Type, b: Type) -> Union[SubDerivation, Fail]:
        a = zonk_type(self.store, a)
        b = zonk_type(self.store, b)
        key = (a, b, ctx.entries, self.store.stamp)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        stamp0 = self.store.stamp
        res = self._sub_dispatch(ctx, a, b)
        if self.store.stamp == stamp0:
            self.memo[key] = res
        return res

    def _sub_dispatch(
        self, ctx: Context, a: Type, b: Type
    ) -> Union[SubDerivation, Fail]:
        fails: list[Fail] = []
        attempts = []
        # Right rules first: they are invertible in the declarative system,
        # though the search still falls back (the Pi-left witness strategy
        # can fail where plain reflexivity succeeds).
        if isinstance(b, TSect):
            attempts.append(self._sect_r)
        if isinstance(b, TPi):
            attempts.append(self._pi_r)
        if alpha_eq(a, b):
            attempts.append(self._refl)
        if isinstance(a, TAtom) and isinstance(b, TAtom):
            attempts.append(self._atom)
        if isinstance(a, TArrow) and isinstance(b, TArrow):
            attempts.append(self._arrow)
        if isinstance(a, TCon) and isinstance(b, TCon):
            attempts.append(self._con)
        if isinstance(a, TSect):
            attempts.append(self._sect_l1)
            attempts.append(self._sect_l2)
        if isinstance(a, TPi):
            attempts.append(self._pi_l)

        for i, rule in enumerate(attempts):
            self.tick()
            mark = self.store.mark()
            res = rule(ctx, a, b)
            if not isinstance(res, Fail):
                return res
            self.store.undo(mark)
            fails.append(res)
            if i + 1 < len(attempts):
                self.stats.backtracks += 1
        if len(fails) == 1:
            return fails[0]
        from .parser import pretty_type

        return Fail(
            f"{pretty_type(a)} is not a subtype of {pretty_type(b)}",
            None,
            tuple(fails),
        )

    # -- individual rules ---------------------------------------------------

    def _refl(self, ctx, a, b):
        return SubDerivation("refl", ctx.entries, a, b)

    def _atom(self, ctx, a: TAtom, b: TAtom):
        if ctx.sig.atom_le(a.name, b.name):
            return SubDerivation("atom", ctx.entries, a, b)
        return Fail(f"datasort {a.name} is not a subsort of {b.name}")

    def _arrow(self, ctx, a: TArrow, b: TArrow):
        p1 = self.sub(ctx, b.arg, a.arg)
        if isinstance(p1, Fail):
            return Fail("argument types (contravariant)", None, (p1,))
        p2 = self.sub(ctx, a.res, b.res)
        if isinstance(p2, Fail):
            return Fail("result types", None, (p2,))
        return SubDerivation("arrow", ctx.entries, a, b, (p1, p2))

    def _sect_r(self, ctx, a, b: TSect):
        p1 = self.sub(ctx, a, b.lhs)
        if isinstance(p1, Fail):
            return Fail("right intersection, left conjunct", None, (p1,))
        p2 = self.sub(ctx, a, b.rhs)
        if isinstance(p2, Fail):
            return Fail("right intersection, right conjunct", None, (p2,))
        return SubDerivation("sect-r", ctx.entries, a, b, (p1, p2))

    def _sect_l1(self, ctx, a: TSect, b):
        p = self.sub(ctx, a.lhs, b)
        if isinstance(p, Fail):
            return Fail("left projection 1", None, (p,))
        return SubDerivation("sect-l1", ctx.entries, a, b, (p,))

    def _sect_l2(self, ctx, a: TSect, b):
        p = self.sub(ctx, a.rhs, b)
        if isinstance(p, Fail):
            return Fail("left projection 2", None, (p,))
        return SubDerivation("sect-l2", ctx.entries, a, b, (p,))

    def _con(self, ctx, a: TCon, b: TCon):
        if a.con != b.con:
            return Fail(f"distinct constructors {a.con} and {b.con}")
        i1 = zonk_index(self.store, a.index)
        i2 = zonk_index(self.store, b.index)
        goal = Eq(i1, i2)
        unsolved = [
            uid
            for uid in indices.normalize(i1).sub(indices.normalize(i2)).keys()
            if uid[0] == "m" and self.store.solution(uid[1]) is None
        ]
        if len(unsolved) == 1:
            try:
                uid, solution = solve_meta(ctx, goal)
            except NoSolution as ex:
                return Fail(f"index constraint has no solution: {ex}")
            self.store.assign(uid, solution)
            return SubDerivation("ilr", ctx.entries, a, b)
        if unsolved:
            return Fail("index constraint with several unsolved metavariables")
        if self.entails(ctx, [], goal):
            return SubDerivation("ilr", ctx.entries, a, b)
        from .parser import pretty_index

        return Fail(
            f"index equality {pretty_index(i1)} = {pretty_index(i2)} "
            "is not entailed"
        )

    def _pi_r(self, ctx, a, b: TPi):
        var = b.var
        body = b.body
        if var in ctx.index_vars():
            var2 = fresh_name(var, ctx.index_vars() | free_index_vars(body))
            body = subst_index_in_type(IVar(var2), var, body)
            var = var2
        ctx2 = ctx.extend(IdxDecl(var, b.sort))
        p = self.sub(ctx2, a, body)
        if isinstance(p, Fail):
            return Fail("right Pi body", None, (p,))
        return SubDerivation("pi-r", ctx.entries, a, b, (p,))

    def _pi_l(self, ctx, a: TPi, b):
        m = self.store.fresh(a.sort, scope=ctx.index_vars())
        inst = subst_index_in_type(m, a.var, a.body)
        p = self.sub(ctx, inst, b)
        if isinstance(p, Fail):
            return Fail("left Pi instantiation", None, (p,))
        if self.store.solution(m.uid) is None:
            return Fail(
                f"no instantiation determined for Pi-bound '{a.var}'"
            )
        return SubDerivation("pi-l", ctx.entries, a, b, (p,), witness=m)


def subtype(
    ctx: Context,
    a: Type,
    b: Type,
    *,
    store: Optional[MetaStore] = None,
    stats: Optional[Stats] = None,
    max_depth: int = 512,
) -> Union[SubDerivation, Fail]:
    """Decide ctx |- a <= b.

    On success the returned derivation is fully zonked and any metavariable
    solutions remain recorded in the store; on failure the store is restored
    to its entry state.
    """
    if store is None:
        store = ctx.metas if ctx.metas is not None else MetaStore()
    if ctx.metas is not store:
        ctx = Context(ctx.sig, ctx.entries, store)
    if stats is None:
        stats = Stats()
    stats.subtype_queries += 1
    search = _Search(store, stats, max_depth)
    mark = store.mark()
    try:
        res = search.sub(ctx, a, b)
    except DepthExceeded:
        res = Fail(f"subtyping search exceeded {max_depth} rule applications")
    except UnboundIndexVariable as ex:
        res = Fail(str(ex))
    if isinstance(res, Fail):
        store.undo(mark)
        return res
    return res.zonked(store)


# ---------------------------------------------------------------------------
# Independent replay of a derivation, rule by rule.


def verify_subtyping(sig, d: SubDerivation) -> None:
    """Check that a (ground) derivation applies its rules correctly.

    Raises VerifyError on the first node that does not replay.
    """
    ctx = Context(sig, d.ctx_entries)
    rule = d.rule
    if rule == "refl":
        _require(alpha_eq(d.lhs, d.rhs), d, "refl on unequal types")
        _require(not d.premises, d, "refl has no premises")
    elif rule == "atom":
        _require(
            isinstance(d.lhs, TAtom)
            and isinstance(d.rhs, TAtom)
            and sig.atom_le(d.lhs.name, d.rhs.name),
            d,
            "atom order does not hold",
        )
    elif rule == "arrow":
        _require(
            isinstance(d.lhs, TArrow) and isinstance(d.rhs, TArrow), d, "not arrows"
        )
        p1, p2 = d.premises
        _require(
            alpha_eq(p1.lhs, d.rhs.arg) and alpha_eq(p1.rhs, d.lhs.arg),
            d,
            "arrow contravariant premise mismatch",
        )
        _require(
            alpha_eq(p2.lhs, d.lhs.res) and alpha_eq(p2.rhs, d.rhs.res),
            d,
            "arrow covariant premise mismatch",
        )
        _require(p1.ctx_entries == d.ctx_entries, d, "premise context changed")
    elif rule == "sect-r":
        _require(isinstance(d.rhs, TSect), d, "sect-r on non-intersection")
        p1, p2 = d.premises
        _require(
            alpha_eq(p1.lhs, d.lhs) and alpha_eq(p1.rhs, d.rhs.lhs), d, "sect-r left"
        )
        _require(
            alpha_eq(p2.lhs, d.lhs) and alpha_eq(p2.rhs, d.rhs.rhs), d, "sect-r right"
        )
    elif rule in ("sect-l1", "sect-l2"):
        _require(isinstance(d.lhs, TSect), d, "sect-l on non-intersection")
        (p,) = d.premises
        side = d.lhs.lhs if rule == "sect-l1" else d.lhs.rhs
        _require(
            alpha_eq(p.lhs, side) and alpha_eq(p.rhs, d.rhs), d, "sect-l premise"
        )
    elif rule == "ilr":
        _require(
            isinstance(d.lhs, TCon)
            and isinstance(d.rhs, TCon)
            and d.lhs.con == d.rhs.con,
            d,
            "ilr constructor mismatch",
        )
        _require(
            entails(ctx, [], Eq(d.lhs.index, d.rhs.index)),
            d,
            "ilr index equality not entailed",
        )
    elif rule == "pi-r":
        _require(isinstance(d.rhs, TPi), d, "pi-r on non-Pi")
        (p,) = d.premises
        _require(
            len(p.ctx_entries) == len(d.ctx_entries) + 1, d, "pi-r context arity"
        )
        last = p.ctx_entries[-1]
        _require(
            isinstance(last, IdxDecl) and last.sort == d.rhs.sort,
            d,
            "pi-r bound sort",
        )
        expect = subst_index_in_type(IVar(last.name), d.rhs.var, d.rhs.body)
        _require(
            alpha_eq(p.lhs, d.lhs) and alpha_eq(p.rhs, expect), d, "pi-r premise"
        )
    elif rule == "pi-l":
        _require(isinstance(d.lhs, TPi), d, "pi-l on non-Pi")
        _require(d.witness is not None, d, "pi-l requires a witness")
        _require(
            indices.sort_of(ctx, d.witness) == d.lhs.sort, d, "pi-l witness sort"
        )
        (p,) = d.premises
        expect = subst_index_in_type(d.witness, d.lhs.var, d.lhs.body)
        _require(
            alpha_eq(p.lhs, expect) and alpha_eq(p.rhs, d.rhs), d, "pi-l premise"
        )
    else:
        raise VerifyError(f"unknown subtyping rule {rule!r}")
    for p in d.premises:
        verify_subtyping(sig, p)


def _require(cond: bool, d: SubDerivation, message: str) -> None:
    if not cond:
        raise VerifyError(f"[{d.rule}] {message}")
