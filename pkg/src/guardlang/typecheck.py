"""Bidirectional typechecking: `ctx |- e <= A` and `ctx |- e => A`.

The checker is a backtracking search over the rules, with a fixed order:
in checking mode the invertible rules come first (intersection introduction,
Pi introduction, arrow introduction, unit, `some`, guards), then merge
branches, and finally subsumption (synthesize, then subtype).  Elimination
positions instantiate synthesized Pi types with metavariables; the indexed
subtyping equalities solve them.

A `some` binder substitutes a fresh metavariable for its variable and
requires it solved by the end of that subterm's derivation.  Checking-mode
results are memoized when the call touched no metavariables, which is where
repeated checking under intersection introduction would otherwise blow up.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .indices import UnboundIndexVariable, sort_of
from .parser import pretty_decl, pretty_term, pretty_type
from .subtyping import (
    DepthExceeded,
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
    Decl,
    Guard,
    IVar,
    IdxDecl,
    IdxLam,
    IndexExpr,
    Lam,
    Merge,
    MetaStore,
    Prim,
    Program,
    Signature,
    Some,
    Span,
    TArrow,
    TAtom,
    TCon,
    TPi,
    TSect,
    TUnit,
    Term,
    Type,
    Unit,
    Var,
    VarDecl,
    alpha_eq,
    fresh_name,
    free_index_vars,
    free_term_vars,
    metas_of,
    subst_index_in_term,
    subst_index_in_type,
    subst_term_var,
    zonk_index,
    zonk_term,
    zonk_type,
)

CandidateStream = Iterator[tuple[Type, "TypingDerivation"]]


@dataclass(frozen=True)
class TypingDerivation:
    rule: str
    mode: str  # "check" | "synth"
    ctx_entries: tuple[Decl, ...]
    term: Term
    ty: Optional[Type]
    premises: tuple = ()
    witness: Optional[IndexExpr] = None
    branch: Optional[int] = None

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)

    def zonked(self, store: MetaStore) -> "TypingDerivation":
        return TypingDerivation(
            self.rule,
            self.mode,
            tuple(
                VarDecl(d.name, zonk_type(store, d.ty), span=d.span)
                if isinstance(d, VarDecl)
                else d
                for d in self.ctx_entries
            ),
            zonk_term(store, self.term),
            zonk_type(store, self.ty) if self.ty is not None else None,
            tuple(p.zonked(store) for p in self.premises),
            zonk_index(store, self.witness) if self.witness is not None else None,
            self.branch,
        )


class IllFormedType(Exception):
    pass


def check_type_wf(ctx: Context, ty: Type) -> None:
    """Every atom and constructor declared, every index variable in scope."""
    match ty:
        case TUnit():
            return
        case TAtom(name):
            if name not in ctx.sig.atoms:
                raise IllFormedType(f"undeclared datasort '{name}'")
        case TArrow(a, b) | TSect(a, b):
            check_type_wf(ctx, a)
            check_type_wf(ctx, b)
        case TCon(con, idx):
            if con not in ctx.sig.cons:
                raise IllFormedType(f"undeclared indexed constructor '{con}'")
            try:
                got = sort_of(ctx, idx)
            except UnboundIndexVariable as ex:
                raise IllFormedType(str(ex)) from None
            if got != ctx.sig.cons[con]:
                raise IllFormedType(
                    f"index of '{con}' has sort {got}, expected {ctx.sig.cons[con]}"
                )
        case TPi(a, sort, body):
            if a in ctx.index_vars():
                a2 = fresh_name(a, ctx.index_vars() | free_index_vars(body))
                body = subst_index_in_type(IVar(a2), a, body)
                a = a2
            check_type_wf(ctx.extend(IdxDecl(a, sort)), body)
        case _:
            raise IllFormedType(f"unexpected type {ty!r}")


class Checker:
    """One typechecking run: rule search, metavariable store, statistics."""

    def __init__(
        self,
        sig: Signature,
        *,
        max_depth: int = 512,
        ctx_anno: bool = True,
        memoize: bool = True,
    ) -> None:
        self.sig = sig
        self.max_depth = max_depth
        self.ctx_anno_enabled = ctx_anno
        self.memoize = memoize
        self.metas = MetaStore()
        self.stats = Stats()
        self._memo: dict = {}
        self._budget = max_depth

    def fresh_ctx(self) -> Context:
        return Context(self.sig, (), self.metas)

    # -- public entry points -------------------------------------------------

    def check(self, ctx: Context, e: Term, ty: Type) -> Union[TypingDerivation, Fail]:
        """Top-level checking judgment; result derivations are ground."""
        self._budget = self.max_depth
        try:
            res = self._check(ctx, e, ty)
        except DepthExceeded:
            return Fail(
                f"typing search exceeded {self.max_depth} rule applications"
            )
        if isinstance(res, Fail):
            return res
        zonked = res.zonked(self.metas)
        leftover = self._unsolved_in(zonked)
        if leftover:
            return Fail(
                "derivation left index metavariables unresolved: "
                + ", ".join(f"?{u}" for u in sorted(leftover))
            )
        return zonked

    def synth(
        self, ctx: Context, e: Term
    ) -> Union[list[tuple[Type, TypingDerivation]], Fail]:
        """All ground synthesis candidates, intersection projections included."""
        self._budget = self.max_depth
        fails: list[Fail] = []
        out: list[tuple[Type, TypingDerivation]] = []
        try:
            for ty, d in self._synth(ctx, e, fails):
                zty = zonk_type(self.metas, ty)
                zd = d.zonked(self.metas)
                if not self._unsolved_in(zd) and not metas_of(zty):
                    out.extend(self._projections(ctx, zty, zd))
        except DepthExceeded:
            fails.append(
                Fail(f"typing search exceeded {self.max_depth} rule applications")
            )
        if out:
            return out
        return Fail(
            f"no type synthesized for {pretty_term(e)}",
            e.span,
            tuple(fails),
        )

    def _projections(self, ctx, ty, d):
        yield ty, d
        if isinstance(ty, TSect):
            for rule, side in (("sect-e1", ty.lhs), ("sect-e2", ty.rhs)):
                node = TypingDerivation(
                    rule, "synth", ctx.entries, d.term, side, (d,)
                )
                yield from self._projections(ctx, side, node)

    def _unsolved_in(self, d) -> set[int]:
        out: set[int] = set()

        def walk(node) -> None:
            if isinstance(node, TypingDerivation):
                out.update(metas_of(node.term))
                if node.ty is not None:
                    out.update(metas_of(node.ty))
                if node.witness is not None:
                    out.update(metas_of(node.witness))
            elif isinstance(node, SubDerivation):
                out.update(metas_of(node.lhs))
                out.update(metas_of(node.rhs))
                if node.witness is not None:
                    out.update(metas_of(node.witness))
            else:  # contextual-subsumption node
                for x in node.meta_carriers():
                    out.update(metas_of(x))
            for p in node.premises:
                walk(p)

        walk(d)
        return {u for u in out if self.metas.solution(u) is None}

    # -- search plumbing ------------------------------------------------------

    def _tick(self) -> None:
        self.stats.rule_applications += 1
        self._budget -= 1
        if self._budget < 0:
            raise DepthExceeded()

    def _wf(self, ctx: Context, ty: Type) -> Optional[Fail]:
        try:
            check_type_wf(ctx, ty)
        except IllFormedType as ex:
            return Fail(f"ill-formed annotation: {ex}", ty.span)
        return None

    def _subtype(self, ctx: Context, a: Type, b: Type):
        return subtype(
            ctx, a, b, store=self.metas, stats=self.stats, max_depth=self.max_depth
        )

    # -- checking -------------------------------------------------------------

    def _check(self, ctx: Context, e: Term, ty: Type) -> Union[TypingDerivation, Fail]:
        key = None
        if self.memoize:
            key = (e, ty, ctx.entries, self.metas.stamp)
            hit = self._memo.get(key)
            if hit is not None:
                return hit
        stamp0 = self.metas.stamp
        res = self._check_dispatch(ctx, e, ty)
        if self.memoize and self.metas.stamp == stamp0:
            self._memo[key] = res
        return res

    def _check_dispatch(self, ctx, e, ty) -> Union[TypingDerivation, Fail]:
        alts = []
        if isinstance(ty, TSect):
            alts.append(self._chk_sect_i)
        if isinstance(ty, TPi):
            alts.append(
                self._chk_pi_explicit if isinstance(e, IdxLam) else self._chk_pi_i
            )
        if isinstance(e, Lam) and isinstance(ty, TArrow):
            alts.append(self._chk_arrow_i)
        if isinstance(e, Unit) and isinstance(ty, TUnit):
            alts.append(self._chk_unit_i)
        if isinstance(e, Some):
            alts.append(self._chk_some)
        if isinstance(e, Guard):
            alts.append(self._chk_guard)
        if isinstance(e, Merge):
            alts.append(self._chk_merge)
        alts.append(self._chk_sub)

        fails: list[Fail] = []
        for i, rule in enumerate(alts):
            self._tick()
            mark = self.metas.mark()
            res = rule(ctx, e, ty)
            if not isinstance(res, Fail):
                return res
            self.metas.undo(mark)
            fails.append(res)
            if i + 1 < len(alts):
                self.stats.backtracks += 1
        if len(fails) == 1:
            return fails[0]
        return Fail(
            f"{pretty_term(e)} does not check against {pretty_type(ty)}",
            e.span,
            tuple(fails),
        )

    def _chk_sect_i(self, ctx, e, ty: TSect):
        d1 = self._check(ctx, e, ty.lhs)
        if isinstance(d1, Fail):
            return Fail(
                f"conjunct {pretty_type(ty.lhs)} fails", e.span, (d1,)
            )
        d2 = self._check(ctx, e, ty.rhs)
        if isinstance(d2, Fail):
            return Fail(
                f"conjunct {pretty_type(ty.rhs)} fails", e.span, (d2,)
            )
        return TypingDerivation("sect-i", "check", ctx.entries, e, ty, (d1, d2))

    def _chk_pi_i(self, ctx, e, ty: TPi):
        var, body = ty.var, ty.body
        if var in ctx.index_vars():
            var2 = fresh_name(var, ctx.index_vars() | free_index_vars(body))
            body = subst_index_in_type(IVar(var2), var, body)
            var = var2
        ctx2 = ctx.extend(IdxDecl(var, ty.sort))
        d = self._check(ctx2, e, body)
        if isinstance(d, Fail):
            return Fail(f"under Pi-bound {var}", e.span, (d,))
        return TypingDerivation("pi-i", "check", ctx.entries, e, ty, (d,))

    def _chk_pi_explicit(self, ctx, e: IdxLam, ty: TPi):
        if e.sort != ty.sort:
            return Fail(
                f"idxfn binds sort {e.sort} but the type quantifies {ty.sort}",
                e.span,
            )
        var, ebody = e.var, e.body
        if var in ctx.index_vars():
            var2 = fresh_name(
                var,
                ctx.index_vars()
                | free_index_vars(ebody)
                | free_index_vars(ty.body),
            )
            ebody = subst_index_in_term(IVar(var2), var, ebody)
            var = var2
        tbody = (
            ty.body
            if ty.var == var
            else subst_index_in_type(IVar(var), ty.var, ty.body)
        )
        ctx2 = ctx.extend(IdxDecl(var, ty.sort))
        d = self._check(ctx2, ebody, tbody)
        if isinstance(d, Fail):
            return Fail(f"under idxfn-bound {var}", e.span, (d,))
        return TypingDerivation("pi-i-explicit", "check", ctx.entries, e, ty, (d,))

    def _chk_arrow_i(self, ctx, e: Lam, ty: TArrow):
        var, body = e.var, e.body
        if var in ctx.term_vars():
            var2 = fresh_name(var, ctx.term_vars() | free_term_vars(body))
            body = subst_term_var(Var(var2), var, body)
            var = var2
        ctx2 = ctx.extend(VarDecl(var, ty.arg))
        d = self._check(ctx2, body, ty.res)
        if isinstance(d, Fail):
            return Fail(f"function body fails", e.span, (d,))
        return TypingDerivation("arrow-i", "check", ctx.entries, e, ty, (d,))

    def _chk_unit_i(self, ctx, e, ty):
        return TypingDerivation("unit-i", "check", ctx.entries, e, ty)

    def _chk_some(self, ctx, e: Some, ty):
        m = self.metas.fresh(e.sort, scope=ctx.index_vars())
        body = subst_index_in_term(m, e.var, e.body)
        d = self._check(ctx, body, ty)
        if isinstance(d, Fail):
            return Fail(f"under `some {e.var}`", e.span, (d,))
        if self.metas.solution(m.uid) is None:
            return Fail(
                f"no index expression determined for `some {e.var}`", e.span
            )
        return TypingDerivation(
            "some", "check", ctx.entries, e, ty, (d,), witness=m
        )

    def _chk_guard(self, ctx, e: Guard, ty):
        ev = self.check_guard(ctx, e.decl)
        if isinstance(ev, Fail):
            return Fail(
                f"guard not satisfied: {pretty_decl(e.decl)}",
                e.span or e.decl.span,
                (ev,),
            )
        d = self._check(ctx, e.body, ty)
        if isinstance(d, Fail):
            return Fail(f"guarded body fails", e.span, (d,))
        return TypingDerivation("guard-chk", "check", ctx.entries, e, ty, (ev, d))

    def _chk_merge(self, ctx, e: Merge, ty):
        fails = []
        for k, branch in ((1, e.lhs), (2, e.rhs)):
            mark = self.metas.mark()
            d = self._check(ctx, branch, ty)
            if not isinstance(d, Fail):
                return TypingDerivation(
                    "merge-chk", "check", ctx.entries, e, ty, (d,), branch=k
                )
            self.metas.undo(mark)
            self.stats.backtracks += 1
            fails.append(Fail(f"merge branch {k} fails", branch.span, (d,)))
        return Fail(
            f"no merge branch checks against {pretty_type(ty)}",
            e.span,
            tuple(fails),
        )

    def _chk_sub(self, ctx, e, ty):
        fails: list[Fail] = []
        for sty, sd in self._synth(ctx, e, fails):
            mark = self.metas.mark()
            sub = self._subtype(ctx, sty, ty)
            if not isinstance(sub, Fail):
                return TypingDerivation(
                    "sub", "check", ctx.entries, e, ty, (sd, sub)
                )
            fails.append(
                Fail(
                    f"synthesized {pretty_type(zonk_type(self.metas, sty))} is "
                    f"not a subtype of {pretty_type(ty)}",
                    e.span,
                    (sub,),
                )
            )
            self.metas.undo(mark)
            self.stats.backtracks += 1
        return Fail(
            f"cannot check {pretty_term(e)} against {pretty_type(ty)}",
            e.span,
            tuple(fails),
        )

    # -- guards ----------------------------------------------------------------

    def check_guard(self, ctx: Context, d: Decl) -> Union[TypingDerivation, Fail]:
        if isinstance(d, VarDecl):
            bad = self._wf(ctx, d.ty)
            if bad is not None:
                return bad
            got = ctx.lookup_var(d.name)
            if got is None:
                return Fail(f"guard subject '{d.name}' is not in scope", d.span)
            sd = self._subtype(ctx, got, d.ty)
            if isinstance(sd, Fail):
                return Fail(
                    f"'{d.name}' has type {pretty_type(got)}, which does not "
                    f"entail {pretty_type(d.ty)}",
                    d.span,
                    (sd,),
                )
            var_node = TypingDerivation(
                "var", "synth", ctx.entries, Var(d.name), got
            )
            return TypingDerivation(
                "sub", "check", ctx.entries, Var(d.name), d.ty, (var_node, sd)
            )
        got = ctx.lookup_index(d.name)
        if got != d.sort:
            return Fail(
                f"index variable '{d.name}' is not declared with sort {d.sort}",
                d.span,
            )
        return TypingDerivation("ivar", "check", ctx.entries, Var(d.name), None)

    # -- synthesis ---------------------------------------------------------------

    def _synth(self, ctx: Context, e: Term, fails: list[Fail]) -> CandidateStream:
        self._tick()
        match e:
            case Var(name):
                ty = ctx.lookup_var(name)
                if ty is None:
                    fails.append(Fail(f"unbound variable '{name}'", e.span))
                    return
                yield ty, TypingDerivation("var", "synth", ctx.entries, e, ty)
            case Prim(name):
                ty = self.sig.prims.get(name)
                if ty is None:
                    fails.append(Fail(f"undeclared primitive '{name}'", e.span))
                    return
                yield ty, TypingDerivation("prim", "synth", ctx.entries, e, ty)
            case Anno(body, ty):
                bad = self._wf(ctx, ty)
                if bad is not None:
                    fails.append(bad)
                    return
                mark = self.metas.mark()
                d = self._check(ctx, body, ty)
                if isinstance(d, Fail):
                    fails.append(
                        Fail(
                            f"annotated term does not check against "
                            f"{pretty_type(ty)}",
                            e.span,
                            (d,),
                        )
                    )
                    self.metas.undo(mark)
                    return
                yield ty, TypingDerivation(
                    "right-anno", "synth", ctx.entries, e, ty, (d,)
                )
                self.metas.undo(mark)
            case Guard(decl, body):
                mark = self.metas.mark()
                ev = self.check_guard(ctx, decl)
                if isinstance(ev, Fail):
                    fails.append(
                        Fail(
                            f"guard not satisfied: {pretty_decl(decl)}",
                            e.span or decl.span,
                            (ev,),
                        )
                    )
                    self.metas.undo(mark)
                    return
                for ty, d in self._synth(ctx, body, fails):
                    yield ty, TypingDerivation(
                        "guard-syn", "synth", ctx.entries, e, ty, (ev, d)
                    )
                self.metas.undo(mark)
            case Merge(lhs, rhs):
                for k, branch in ((1, lhs), (2, rhs)):
                    mark = self.metas.mark()
                    for ty, d in self._synth(ctx, branch, fails):
                        yield ty, TypingDerivation(
                            "merge-syn", "synth", ctx.entries, e, ty, (d,), branch=k
                        )
                    self.metas.undo(mark)
                    self.stats.backtracks += 1
            case Some(var, sort, body):
                m = self.metas.fresh(sort, scope=ctx.index_vars())
                inner = subst_index_in_term(m, var, body)
                mark = self.metas.mark()
                produced_unsolved = False
                for ty, d in self._synth(ctx, inner, fails):
                    if self.metas.solution(m.uid) is None:
                        produced_unsolved = True
                        continue
                    yield ty, TypingDerivation(
                        "some", "synth", ctx.entries, e, ty, (d,), witness=m
                    )
                self.metas.undo(mark)
                if produced_unsolved:
                    fails.append(
                        Fail(
                            f"no index expression determined for `some {var}`",
                            e.span,
                        )
                    )
            case App(fn, arg):
                for fty, fd in self._synth(ctx, fn, fails):
                    for aty, rty, fd2 in self._elim_arrow(ctx, fty, fd, fails):
                        mark = self.metas.mark()
                        ad = self._check(ctx, arg, aty)
                        if isinstance(ad, Fail):
                            fails.append(
                                Fail(
                                    f"argument does not check against "
                                    f"{pretty_type(zonk_type(self.metas, aty))}",
                                    arg.span,
                                    (ad,),
                                )
                            )
                            self.metas.undo(mark)
                            continue
                        yield rty, TypingDerivation(
                            "arrow-e", "synth", ctx.entries, e, rty, (fd2, ad)
                        )
                        self.metas.undo(mark)
            case CtxAnno(_, _):
                if not self.ctx_anno_enabled:
                    fails.append(
                        Fail("contextual annotations are disabled", e.span)
                    )
                    return
                from . import ctxanno

                yield from ctxanno.check_ctx_anno(self, ctx, e, fails)
            case _:
                fails.append(
                    Fail(
                        f"{pretty_term(e)} does not synthesize a type "
                        "(it can only be checked)",
                        e.span,
                    )
                )

    def _elim_arrow(self, ctx, ty: Type, d: TypingDerivation, fails):
        """Arrow views of a synthesized type, via intersection projections
        and Pi instantiation."""
        ty = zonk_type(self.metas, ty)
        if isinstance(ty, TArrow):
            yield ty.arg, ty.res, d
            return
        if isinstance(ty, TSect):
            for rule, side in (("sect-e1", ty.lhs), ("sect-e2", ty.rhs)):
                node = TypingDerivation(
                    rule, "synth", ctx.entries, d.term, side, (d,)
                )
                yield from self._elim_arrow(ctx, side, node, fails)
            return
        if isinstance(ty, TPi):
            m = self.metas.fresh(ty.sort, scope=ctx.index_vars())
            inst = subst_index_in_type(m, ty.var, ty.body)
            node = TypingDerivation(
                "pi-e", "synth", ctx.entries, d.term, inst, (d,), witness=m
            )
            yield from self._elim_arrow(ctx, inst, node, fails)
            return
        fails.append(
            Fail(
                f"{pretty_type(ty)} is not a function type",
                d.term.span,
            )
        )


# ---------------------------------------------------------------------------
# Whole-program checking


@dataclass
class Diagnostic:
    message: str
    span: Optional[Span] = None

    def as_dict(self) -> dict:
        d: dict = {"message": self.message}
        if self.span is not None:
            d.update(
                file=self.span.file,
                start_line=self.span.start_line,
                start_col=self.span.start_col,
                end_line=self.span.end_line,
                end_col=self.span.end_col,
            )
        return d


@dataclass
class Report:
    verdict: str  # "accept" | "reject"
    checked_type: Optional[Type] = None
    derivation: Optional[TypingDerivation] = None
    diagnostics: list[Diagnostic] = field(default_factory=list)
    stats: Stats = field(default_factory=Stats)

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"


_MAX_DIAGNOSTICS = 24


def _diagnostics_from(f: Fail) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    seen: set[str] = set()
    for node in f.walk():
        if node.reason not in seen:
            seen.add(node.reason)
            out.append(Diagnostic(node.reason, node.span))
        if len(out) >= _MAX_DIAGNOSTICS:
            break
    return out


def validate_program(prog: Program) -> list[Diagnostic]:
    """Header and scope checks that precede typechecking proper."""
    diags: list[Diagnostic] = []
    try:
        prog.sig.validate()
    except Exception as ex:
        diags.append(Diagnostic(str(ex)))
        return diags
    ctx = Context(prog.sig)
    for name, ty in prog.sig.prims.items():
        try:
            check_type_wf(ctx, ty)
        except IllFormedType as ex:
            diags.append(Diagnostic(f"primitive '{name}': {ex}", ty.span))
        if free_index_vars(ty):
            diags.append(
                Diagnostic(
                    f"primitive '{name}' must have a closed type", ty.span
                )
            )
    if prog.goal is not None:
        try:
            check_type_wf(ctx, prog.goal)
        except IllFormedType as ex:
            diags.append(Diagnostic(f"goal type: {ex}", prog.goal.span))
        if free_index_vars(prog.goal):
            diags.append(
                Diagnostic("goal type must be closed", prog.goal.span)
            )
    unbound = free_term_vars(prog.main)
    for name in sorted(unbound):
        diags.append(Diagnostic(f"unbound variable '{name}'", prog.main.span))
    free_idx = free_index_vars(prog.main)
    for name in sorted(free_idx):
        diags.append(
            Diagnostic(
                f"index variable '{name}' is not bound by a `some` or "
                "`idxfn` binder",
                prog.main.span,
            )
        )
    return diags


def typecheck_program(
    prog: Program,
    *,
    max_depth: int = 512,
    ctx_anno: bool = True,
    memoize: bool = True,
) -> Report:
    t0 = time.perf_counter()
    diags = validate_program(prog)
    if diags:
        report = Report("reject", diagnostics=diags)
        report.stats.wall_ms = (time.perf_counter() - t0) * 1000
        return report
    checker = Checker(
        prog.sig, max_depth=max_depth, ctx_anno=ctx_anno, memoize=memoize
    )
    ctx = checker.fresh_ctx()
    if prog.goal is not None:
        res = checker.check(ctx, prog.main, prog.goal)
        if isinstance(res, Fail):
            report = Report(
                "reject", diagnostics=_diagnostics_from(res), stats=checker.stats
            )
        else:
            report = Report(
                "accept",
                checked_type=prog.goal,
                derivation=res,
                stats=checker.stats,
            )
    else:
        res = checker.synth(ctx, prog.main)
        if isinstance(res, Fail):
            report = Report(
                "reject", diagnostics=_diagnostics_from(res), stats=checker.stats
            )
        else:
            ty, d = res[0]
            report = Report(
                "accept", checked_type=ty, derivation=d, stats=checker.stats
            )
    report.stats.wall_ms = (time.perf_counter() - t0) * 1000
    return report


# ---------------------------------------------------------------------------
# Independent derivation replay


def verify_typing(sig: Signature, d: TypingDerivation) -> None:
    """Re-apply the typing rules node by node; raises VerifyError on the
    first node that does not replay.  Expects a ground derivation."""
    ctx = Context(sig, d.ctx_entries)
    e, ty = d.term, d.ty
    rule = d.rule

    def req(cond: bool, msg: str) -> None:
        if not cond:
            raise VerifyError(f"[{rule}] {msg}: {pretty_term(e)}")

    def tprem(i: int) -> TypingDerivation:
        p = d.premises[i]
        req(isinstance(p, TypingDerivation), f"premise {i} is not a typing")
        return p

    if rule == "var":
        req(isinstance(e, Var) and d.mode == "synth", "shape")
        req(ctx.lookup_var(e.name) == ty, "context lookup differs")
    elif rule == "prim":
        req(isinstance(e, Prim) and d.mode == "synth", "shape")
        req(sig.prims.get(e.name) == ty, "declared primitive type differs")
    elif rule == "unit-i":
        req(isinstance(e, Unit) and isinstance(ty, TUnit), "shape")
    elif rule == "arrow-i":
        req(isinstance(e, Lam) and isinstance(ty, TArrow), "shape")
        p = tprem(0)
        req(len(p.ctx_entries) == len(d.ctx_entries) + 1, "context arity")
        last = p.ctx_entries[-1]
        req(
            isinstance(last, VarDecl) and alpha_eq(last.ty, ty.arg),
            "bound variable type",
        )
        req(
            alpha_eq(p.term, subst_term_var(Var(last.name), e.var, e.body)),
            "premise term",
        )
        req(alpha_eq(p.ty, ty.res), "premise type")
    elif rule == "sect-i":
        req(isinstance(ty, TSect), "shape")
        p1, p2 = tprem(0), tprem(1)
        req(alpha_eq(p1.term, e) and alpha_eq(p2.term, e), "premise terms")
        req(
            alpha_eq(p1.ty, ty.lhs) and alpha_eq(p2.ty, ty.rhs),
            "premise types",
        )
    elif rule in ("sect-e1", "sect-e2"):
        p = tprem(0)
        req(isinstance(p.ty, TSect), "premise not an intersection")
        side = p.ty.lhs if rule == "sect-e1" else p.ty.rhs
        req(alpha_eq(ty, side), "projection differs")
        req(alpha_eq(p.term, e), "premise term")
    elif rule == "sub":
        p, s = tprem(0), d.premises[1]
        req(isinstance(s, SubDerivation), "second premise must be subtyping")
        req(p.mode == "synth" and alpha_eq(p.term, e), "synthesis premise")
        req(alpha_eq(s.lhs, p.ty) and alpha_eq(s.rhs, ty), "subtyping premise")
        verify_subtyping(sig, s)
    elif rule in ("merge-chk", "merge-syn"):
        req(isinstance(e, Merge) and d.branch in (1, 2), "shape")
        p = tprem(0)
        branch = e.lhs if d.branch == 1 else e.rhs
        req(alpha_eq(p.term, branch), "premise term is not the branch")
        req(alpha_eq(p.ty, ty), "premise type")
    elif rule == "right-anno":
        req(isinstance(e, Anno) and d.mode == "synth", "shape")
        req(alpha_eq(ty, e.ty), "synthesized type is the annotation")
        p = tprem(0)
        req(
            p.mode == "check" and alpha_eq(p.term, e.body) and alpha_eq(p.ty, e.ty),
            "premise",
        )
    elif rule in ("guard-chk", "guard-syn"):
        req(isinstance(e, Guard), "shape")
        ev, p = tprem(0), tprem(1)
        _verify_guard_evidence(sig, ctx, e.decl, ev)
        req(alpha_eq(p.term, e.body) and alpha_eq(p.ty, ty), "body premise")
    elif rule == "pi-i":
        req(isinstance(ty, TPi), "shape")
        p = tprem(0)
        req(len(p.ctx_entries) == len(d.ctx_entries) + 1, "context arity")
        last = p.ctx_entries[-1]
        req(isinstance(last, IdxDecl) and last.sort == ty.sort, "bound sort")
        req(alpha_eq(p.term, e), "premise term")
        req(
            alpha_eq(p.ty, subst_index_in_type(IVar(last.name), ty.var, ty.body)),
            "premise type",
        )
    elif rule == "pi-i-explicit":
        req(isinstance(e, IdxLam) and isinstance(ty, TPi), "shape")
        req(e.sort == ty.sort, "binder sort")
        p = tprem(0)
        last = p.ctx_entries[-1]
        req(isinstance(last, IdxDecl) and last.sort == ty.sort, "bound sort")
        req(
            alpha_eq(
                p.term, subst_index_in_term(IVar(last.name), e.var, e.body)
            ),
            "premise term",
        )
        req(
            alpha_eq(p.ty, subst_index_in_type(IVar(last.name), ty.var, ty.body)),
            "premise type",
        )
    elif rule == "pi-e":
        p = tprem(0)
        req(isinstance(p.ty, TPi), "premise not a Pi")
        req(d.witness is not None, "missing witness")
        req(sort_of(ctx, d.witness) == p.ty.sort, "witness sort")
        req(
            alpha_eq(ty, subst_index_in_type(d.witness, p.ty.var, p.ty.body)),
            "instantiation differs",
        )
        req(alpha_eq(p.term, e), "premise term")
    elif rule == "some":
        req(isinstance(e, Some), "shape")
        req(d.witness is not None, "missing witness")
        req(sort_of(ctx, d.witness) == e.sort, "witness sort")
        p = tprem(0)
        req(
            alpha_eq(p.term, subst_index_in_term(d.witness, e.var, e.body)),
            "premise term is not the substituted body",
        )
        req(alpha_eq(p.ty, ty), "premise type")
    elif rule == "arrow-e":
        req(isinstance(e, App), "shape")
        p1, p2 = tprem(0), tprem(1)
        req(isinstance(p1.ty, TArrow), "function premise is not an arrow")
        req(alpha_eq(p1.term, e.fn), "function premise term")
        req(
            p2.mode == "check"
            and alpha_eq(p2.term, e.arg)
            and alpha_eq(p2.ty, p1.ty.arg),
            "argument premise",
        )
        req(alpha_eq(ty, p1.ty.res), "result type")
    elif rule == "ivar":
        req(isinstance(e, Var) and ty is None, "shape")
        req(
            ctx.lookup_index(e.name) is not None,
            "index variable not in context",
        )
    elif rule == "ctx-anno":
        from . import ctxanno

        ctxanno.verify_ctx_anno(sig, d)
    else:
        raise VerifyError(f"unknown typing rule {rule!r}")

    for p in d.premises:
        if isinstance(p, TypingDerivation):
            verify_typing(sig, p)
        # SubDerivation premises are verified where they occur; contextual
        # subsumption nodes are replayed by verify_ctx_anno.


def _verify_guard_evidence(sig, ctx, decl, ev) -> None:
    if isinstance(decl, VarDecl):
        if not (
            isinstance(ev, TypingDerivation)
            and ev.rule == "sub"
            and isinstance(ev.term, Var)
            and ev.term.name == decl.name
            and alpha_eq(ev.ty, decl.ty)
        ):
            raise VerifyError("guard evidence does not check the subject")
        verify_typing(sig, ev)
    else:
        if not (
            isinstance(ev, TypingDerivation)
            and ev.rule == "ivar"
            and ctx.lookup_index(decl.name) == decl.sort
        ):
            raise VerifyError("index guard evidence does not match the context")
