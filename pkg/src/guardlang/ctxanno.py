"""Contextual typing annotations and their translation into guards, merges,
right-hand annotations and `some` binders.

A contextual annotation carries typings `Gamma0 |- A0`; the subsumption
relation holds when the ambient context satisfies every declaration of
Gamma0: program-variable typings via subtyping of the looked-up type,
index-variable sortings by instantiating a well-sorted index expression
(found with the same metavariable machinery as Pi-left).

`encode` removes every contextual annotation: each typing becomes a branch
of a right-nested merge, its variable typings become guards, its index
sortings become `some` binders (the sorting behaves existentially, exactly
like the instantiation rule), around a right-hand annotation of the subject.
`verify_encoding` checks the translation end to end: whatever the
annotation-enabled checker accepts, the encoded program must pass with the
contextual rule disabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

from .indices import NoSolution, entails, solve_meta, sort_of, normalize
from .parser import pretty_type
from .subtyping import (
    Fail,
    Stats,
    SubDerivation,
    VerifyError,
    subtype,
    verify_subtyping,
)
from .syntax import (
    Anno,
    App,
    Context,
    CtxAnno,
    CtxTyping,
    Decl,
    Eq,
    Guard,
    IMeta,
    IVar,
    IdxDecl,
    IdxLam,
    IndexExpr,
    Lam,
    Merge,
    MetaStore,
    Program,
    Signature,
    Some,
    TArrow,
    TAtom,
    TCon,
    TPi,
    TSect,
    TUnit,
    Term,
    Type,
    Unit,
    VarDecl,
    alpha_eq,
    fresh_name,
    free_index_vars,
    subst_index_in_ctx_typing,
    subst_index_in_type,
    zonk_index,
    zonk_type,
)
from .typecheck import (
    Checker,
    IllFormedType,
    Report,
    TypingDerivation,
    check_type_wf,
    typecheck_program,
)


@dataclass(frozen=True)
class CtxSubDerivation:
    """One node of a `(Gamma0 |- A0) <~ (Gamma |- A)` derivation."""

    rule: str  # "empty" | "ivar" | "pvar"
    inner: CtxTyping
    ctx_entries: tuple[Decl, ...]
    goal: Type  # the right-hand side's type A
    premises: tuple = ()
    witness: Optional[IndexExpr] = None

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)

    def meta_carriers(self):
        carriers = [self.inner, self.goal]
        if self.witness is not None:
            carriers.append(self.witness)
        return carriers

    def zonked(self, store: MetaStore) -> "CtxSubDerivation":
        return CtxSubDerivation(
            self.rule,
            _zonk_ctx_typing(store, self.inner),
            self.ctx_entries,
            zonk_type(store, self.goal),
            tuple(p.zonked(store) for p in self.premises),
            zonk_index(store, self.witness) if self.witness is not None else None,
        )


def _zonk_ctx_typing(store: MetaStore, t: CtxTyping) -> CtxTyping:
    return CtxTyping(
        tuple(
            VarDecl(d.name, zonk_type(store, d.ty), span=d.span)
            if isinstance(d, VarDecl)
            else d
            for d in t.entries
        ),
        zonk_type(store, t.goal),
        span=t.span,
    )


def _wf_typing(ctx: Context, typing: CtxTyping) -> None:
    """Well-formedness of one contextual typing, with its own index
    sortings in scope for the later entries and the goal."""
    if not typing.entries:
        check_type_wf(ctx, typing.goal)
        return
    d0 = typing.entries[0]
    rest = CtxTyping(typing.entries[1:], typing.goal)
    if isinstance(d0, VarDecl):
        check_type_wf(ctx, d0.ty)
        _wf_typing(ctx, rest)
        return
    assert isinstance(d0, IdxDecl)
    name = d0.name
    if name in ctx.index_vars():
        name2 = fresh_name(name, ctx.index_vars() | free_index_vars(rest))
        rest = subst_index_in_ctx_typing(IVar(name2), name, rest)
        name = name2
    _wf_typing(ctx.extend(IdxDecl(name, d0.sort)), rest)


def _match_entries(
    ctx: Context,
    typing: CtxTyping,
    store: MetaStore,
    stats: Stats,
    max_depth: int,
) -> Union[tuple[CtxSubDerivation, Type], Fail]:
    """Process the inner context left to right, yielding the derivation and
    the substituted goal type (which may still mention the introduced
    metavariables until they are solved)."""
    if not typing.entries:
        node = CtxSubDerivation("empty", typing, ctx.entries, typing.goal)
        return node, typing.goal
    d0 = typing.entries[0]
    rest = CtxTyping(typing.entries[1:], typing.goal)
    if isinstance(d0, VarDecl):
        got = ctx.lookup_var(d0.name)
        if got is None:
            return Fail(
                f"contextual typing requires '{d0.name}', which is not in scope",
                d0.span,
            )
        sd = subtype(ctx, got, d0.ty, store=store, stats=stats, max_depth=max_depth)
        if isinstance(sd, Fail):
            return Fail(
                f"context does not entail {d0.name} : {pretty_type(d0.ty)}",
                d0.span,
                (sd,),
            )
        res = _match_entries(ctx, rest, store, stats, max_depth)
        if isinstance(res, Fail):
            return res
        subnode, goal = res
        return (
            CtxSubDerivation("pvar", typing, ctx.entries, goal, (sd, subnode)),
            goal,
        )
    assert isinstance(d0, IdxDecl)
    m = store.fresh(d0.sort, scope=ctx.index_vars())
    rest = subst_index_in_ctx_typing(m, d0.name, rest)
    res = _match_entries(ctx, rest, store, stats, max_depth)
    if isinstance(res, Fail):
        return res
    subnode, goal = res
    return (
        CtxSubDerivation("ivar", typing, ctx.entries, goal, (subnode,), witness=m),
        goal,
    )


def _ivar_witnesses(node: CtxSubDerivation) -> list[IMeta]:
    out = []
    cur = node
    while True:
        if cur.rule == "ivar":
            assert isinstance(cur.witness, IMeta)
            out.append(cur.witness)
            cur = cur.premises[0]
        elif cur.rule == "pvar":
            cur = cur.premises[1]
        else:
            return out


def _indices_match(ctx, store, stats, i, j) -> bool:
    i = zonk_index(store, i)
    j = zonk_index(store, j)
    unsolved = [
        k
        for k in normalize(i).sub(normalize(j)).keys()
        if k[0] == "m" and store.solution(k[1]) is None
    ]
    if len(unsolved) == 1:
        try:
            uid, solution = solve_meta(ctx, Eq(i, j))
        except NoSolution:
            return False
        store.assign(uid, solution)
        return True
    if unsolved:
        return False
    stats.entailment_queries += 1
    return entails(ctx, [], Eq(i, j))


def _types_match(ctx, store, stats, a: Type, b: Type) -> bool:
    """Structural match up to index entailment on constructor indices."""
    a = zonk_type(store, a)
    b = zonk_type(store, b)
    match a, b:
        case TUnit(), TUnit():
            return True
        case TAtom(x), TAtom(y):
            return x == y
        case (TArrow(a1, b1), TArrow(a2, b2)) | (TSect(a1, b1), TSect(a2, b2)):
            return _types_match(ctx, store, stats, a1, a2) and _types_match(
                ctx, store, stats, b1, b2
            )
        case TCon(c1, i1), TCon(c2, i2):
            return c1 == c2 and _indices_match(ctx, store, stats, i1, i2)
        case TPi(v1, s1, b1), TPi(v2, s2, b2):
            if s1 != s2:
                return False
            fresh = fresh_name(
                v1,
                ctx.index_vars() | free_index_vars(b1) | free_index_vars(b2),
            )
            ctx2 = ctx.extend(IdxDecl(fresh, s1))
            return _types_match(
                ctx2,
                store,
                stats,
                subst_index_in_type(IVar(fresh), v1, b1),
                subst_index_in_type(IVar(fresh), v2, b2),
            )
    return False


def ctx_subsumes(
    inner: CtxTyping,
    ctx: Context,
    outer_goal: Type,
    *,
    store: Optional[MetaStore] = None,
    stats: Optional[Stats] = None,
    max_depth: int = 512,
) -> Union[CtxSubDerivation, Fail]:
    """Decide `(inner.entries |- inner.goal) <~ (ctx |- outer_goal)`."""
    if store is None:
        store = ctx.metas if ctx.metas is not None else MetaStore()
    if ctx.metas is not store:
        ctx = Context(ctx.sig, ctx.entries, store)
    if stats is None:
        stats = Stats()
    try:
        _wf_typing(ctx, inner)
    except IllFormedType as ex:
        return Fail(f"ill-formed contextual typing: {ex}", inner.span)
    mark = store.mark()
    res = _match_entries(ctx, inner, store, stats, max_depth)
    if isinstance(res, Fail):
        store.undo(mark)
        return res
    node, goal = res
    if not _types_match(ctx, store, stats, goal, outer_goal):
        store.undo(mark)
        return Fail(
            f"contextual typing concludes {pretty_type(zonk_type(store, goal))}, "
            f"which does not match {pretty_type(outer_goal)}",
            inner.span,
        )
    unsolved = [
        w for w in _ivar_witnesses(node) if store.solution(w.uid) is None
    ]
    if unsolved:
        store.undo(mark)
        return Fail(
            "index instantiation of the contextual typing is undetermined",
            inner.span,
        )
    return node.zonked(store)


def check_ctx_anno(
    checker: Checker, ctx: Context, e: CtxAnno, fails: list[Fail]
) -> Iterator[tuple[Type, TypingDerivation]]:
    """Synthesis rule for contextual annotations.

    Typings are tried in order; the first whose subsumption holds (with all
    index instantiations solved) is committed, and the subject must then
    check against the substituted goal.
    """
    store = checker.metas
    reasons: list[Fail] = []
    for k, typing in enumerate(e.typings, 1):
        try:
            _wf_typing(ctx, typing)
        except IllFormedType as ex:
            reasons.append(
                Fail(f"typing {k} is ill-formed: {ex}", typing.span)
            )
            continue
        mark = store.mark()
        res = _match_entries(
            ctx, typing, store, checker.stats, checker.max_depth
        )
        if isinstance(res, Fail):
            reasons.append(Fail(f"typing {k} does not apply", typing.span, (res,)))
            store.undo(mark)
            checker.stats.backtracks += 1
            continue
        node, goal = res
        unsolved = [
            w for w in _ivar_witnesses(node) if store.solution(w.uid) is None
        ]
        if unsolved:
            reasons.append(
                Fail(
                    f"typing {k}: index instantiation undetermined",
                    typing.span,
                )
            )
            store.undo(mark)
            checker.stats.backtracks += 1
            continue
        goal = zonk_type(store, goal)
        d = checker._check(ctx, e.body, goal)
        if isinstance(d, Fail):
            fails.append(
                Fail(
                    f"contextual typing {k} applies, but the term does not "
                    f"check against {pretty_type(goal)}",
                    e.span,
                    tuple(reasons) + (d,),
                )
            )
            store.undo(mark)
            return
        yield goal, TypingDerivation(
            "ctx-anno", "synth", ctx.entries, e, goal, (node, d), branch=k
        )
        store.undo(mark)
        return
    fails.append(
        Fail("no contextual typing applies", e.span, tuple(reasons))
    )


# ---------------------------------------------------------------------------
# Translation into the elementary mechanisms


def encode(e: Term) -> Term:
    """Remove every contextual annotation; all other forms map homomorphically."""
    match e:
        case CtxAnno(body, typings):
            subject = encode(body)
            branches = [_encode_typing(t, subject) for t in typings]
            out = branches[-1]
            for b in reversed(branches[:-1]):
                out = Merge(b, out)
            return out
        case Lam(x, body):
            return Lam(x, encode(body), span=e.span)
        case App(f, a):
            return App(encode(f), encode(a), span=e.span)
        case Anno(body, ty):
            return Anno(encode(body), ty, span=e.span)
        case Guard(d, body):
            return Guard(d, encode(body), span=e.span)
        case Merge(l, r):
            return Merge(encode(l), encode(r), span=e.span)
        case Some(a, s, body):
            return Some(a, s, encode(body), span=e.span)
        case IdxLam(a, s, body):
            return IdxLam(a, s, encode(body), span=e.span)
        case _:
            return e


def _encode_typing(t: CtxTyping, subject: Term) -> Term:
    out: Term = Anno(subject, t.goal)
    for d in reversed(t.entries):
        if isinstance(d, VarDecl):
            out = Guard(d, out)
        else:
            out = Some(d.name, d.sort, out)
    return out


def encode_program(prog: Program) -> Program:
    return Program(prog.sig, encode(prog.main), prog.goal, path=prog.path)


@dataclass
class EncodingCheck:
    original: Report
    encoded_program: Optional[Program]
    encoded: Optional[Report]

    @property
    def gap(self) -> bool:
        return (
            self.original.accepted
            and self.encoded is not None
            and not self.encoded.accepted
        )

    @property
    def sizes(self) -> tuple[int, int]:
        a = self.original.derivation.size() if self.original.derivation else 0
        b = (
            self.encoded.derivation.size()
            if self.encoded is not None and self.encoded.derivation
            else 0
        )
        return a, b


class EncodingGapError(Exception):
    """The encoded program failed where the contextual-annotation rule
    succeeded; this contradicts the translation's typing preservation and is
    always a bug."""

    def __init__(self, check: EncodingCheck) -> None:
        diags = check.encoded.diagnostics if check.encoded else []
        detail = "; ".join(d.message for d in diags[:4])
        super().__init__(f"encoding gap: {detail}")
        self.check = check


def verify_encoding(prog: Program, *, max_depth: int = 512) -> EncodingCheck:
    """Typecheck with contextual annotations, translate, re-check without.

    Raises EncodingGapError when the original is accepted but the encoded
    program is not (or, for goal-free programs, synthesizes a different type).
    """
    original = typecheck_program(prog, max_depth=max_depth, ctx_anno=True)
    if not original.accepted:
        return EncodingCheck(original, None, None)
    enc = encode_program(prog)
    encoded = typecheck_program(enc, max_depth=max_depth, ctx_anno=False)
    check = EncodingCheck(original, enc, encoded)
    if not encoded.accepted:
        raise EncodingGapError(check)
    if prog.goal is None and not alpha_eq(
        original.checked_type, encoded.checked_type
    ):
        raise EncodingGapError(check)
    return check


# ---------------------------------------------------------------------------
# Replay of ctx-anno derivation nodes (used by the independent verifier)


def verify_ctx_anno(sig: Signature, d: TypingDerivation) -> None:
    if not isinstance(d.term, CtxAnno) or d.branch is None:
        raise VerifyError("[ctx-anno] malformed node")
    node, chk = d.premises
    if not isinstance(node, CtxSubDerivation) or not isinstance(
        chk, TypingDerivation
    ):
        raise VerifyError("[ctx-anno] premises must be subsumption + checking")
    typing = d.term.typings[d.branch - 1]
    ctx = Context(sig, d.ctx_entries)
    goal = _replay_subsumption(sig, ctx, typing, node)
    if not _types_match(ctx, MetaStore(), Stats(), goal, d.ty):
        raise VerifyError("[ctx-anno] substituted goal differs from conclusion")
    if not (
        chk.mode == "check"
        and alpha_eq(chk.term, d.term.body)
        and alpha_eq(chk.ty, d.ty)
    ):
        raise VerifyError("[ctx-anno] checking premise mismatch")


def _replay_subsumption(
    sig: Signature, ctx: Context, typing: CtxTyping, node: CtxSubDerivation
) -> Type:
    cur = typing
    n = node
    while True:
        if n.rule == "empty":
            if cur.entries:
                raise VerifyError("[<~ empty] entries remain")
            return cur.goal
        if not cur.entries:
            raise VerifyError(f"[<~ {n.rule}] no entries remain")
        d0 = cur.entries[0]
        rest = CtxTyping(cur.entries[1:], cur.goal)
        if n.rule == "pvar":
            if not isinstance(d0, VarDecl):
                raise VerifyError("[<~ pvar] entry is not a variable typing")
            sd = n.premises[0]
            if not isinstance(sd, SubDerivation):
                raise VerifyError("[<~ pvar] missing subtyping premise")
            looked = ctx.lookup_var(d0.name)
            if looked is None or not (
                alpha_eq(sd.lhs, looked) and alpha_eq(sd.rhs, d0.ty)
            ):
                raise VerifyError("[<~ pvar] subtyping premise mismatch")
            verify_subtyping(sig, sd)
            cur = rest
            n = n.premises[1]
        elif n.rule == "ivar":
            if not isinstance(d0, IdxDecl):
                raise VerifyError("[<~ ivar] entry is not an index sorting")
            if n.witness is None:
                raise VerifyError("[<~ ivar] missing witness")
            if sort_of(ctx, n.witness) != d0.sort:
                raise VerifyError("[<~ ivar] witness sort mismatch")
            cur = subst_index_in_ctx_typing(n.witness, d0.name, rest)
            n = n.premises[0]
        else:
            raise VerifyError(f"unknown subsumption rule {n.rule!r}")
