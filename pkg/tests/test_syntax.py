from hypothesis import given, settings
from hypothesis import strategies as st

import strategies
from helpers import oracle_subst_type
from guardlang.syntax import (
    Guard,
    ILit,
    IMul,
    INT,
    IVar,
    IdxDecl,
    Lam,
    Some,
    TCon,
    TPi,
    TUnit,
    Unit,
    Var,
    VarDecl,
    alpha_eq,
    free_index_vars,
    fresh_name,
    subst_index_in_term,
    subst_index_in_type,
    subst_term_var,
)


class TestSubstIndexInType:
    def test_direct_replacement(self):
        ty = TCon("list", IMul(2, IVar("a")))
        assert subst_index_in_type(ILit(3), "a", ty) == TCon(
            "list", IMul(2, ILit(3))
        )

    def test_no_occurrence(self):
        assert subst_index_in_type(IVar("i"), "a", TUnit()) == TUnit()

    def test_capture_avoided(self):
        # [b/a](Pi b:int. list(a+b)) must rename the binder; the oracle does
        # a global fresh-renaming first and then substitutes naively.
        from guardlang.syntax import IAdd

        ty = TPi("b", INT, TCon("list", IAdd(IVar("a"), IVar("b"))))
        got = subst_index_in_type(IVar("b"), "a", ty)
        want = oracle_subst_type(IVar("b"), "a", ty)
        assert alpha_eq(got, want)
        assert isinstance(got, TPi) and got.var != "b"

    @given(repl=strategies.index_exprs(), ty=strategies.types())
    @settings(max_examples=150)
    def test_matches_oracle(self, repl, ty):
        got = subst_index_in_type(repl, "a", ty)
        want = oracle_subst_type(repl, "a", ty)
        assert alpha_eq(got, want)

    @given(ty=strategies.types())
    def test_identity_substitution(self, ty):
        assert alpha_eq(subst_index_in_type(IVar("a"), "a", ty), ty)

    @given(repl=strategies.index_exprs(), ty=strategies.types())
    def test_free_vars_bound(self, repl, ty):
        got = free_index_vars(subst_index_in_type(repl, "a", ty))
        bound = (free_index_vars(ty) - {"a"}) | (
            free_index_vars(repl) if "a" in free_index_vars(ty) else set()
        )
        assert got <= (free_index_vars(ty) - {"a"}) | free_index_vars(repl)
        del bound

    @given(repl=strategies.index_exprs(), a=strategies.types(), b=strategies.types())
    @settings(max_examples=100)
    def test_respects_alpha(self, repl, a, b):
        if alpha_eq(a, b):
            assert alpha_eq(
                subst_index_in_type(repl, "a", a),
                subst_index_in_type(repl, "a", b),
            )


class TestSubstIndexInTerm:
    def test_descends_into_guard_annotations(self):
        # Choosing the index to be a*2 rewrites the guard's type.
        e = Guard(VarDecl("x", TCon("list", IVar("b"))), Var("x"))
        got = subst_index_in_term(IMul(2, IVar("a")), "b", e)
        assert got == Guard(
            VarDecl("x", TCon("list", IMul(2, IVar("a")))), Var("x")
        )

    def test_unit_untouched(self):
        assert subst_index_in_term(IVar("i"), "b", Unit()) == Unit()

    def test_shadowed_binder(self):
        e = Some("b", INT, Guard(VarDecl("x", TCon("list", IVar("b"))), Var("x")))
        assert subst_index_in_term(ILit(5), "b", e) == e

    @given(e=strategies.terms())
    @settings(max_examples=100)
    def test_identity_substitution(self, e):
        assert alpha_eq(subst_index_in_term(IVar("a"), "a", e), e)

    @given(repl=strategies.index_exprs(), e=strategies.terms())
    @settings(max_examples=150)
    def test_free_vars_bound(self, e, repl):
        got = free_index_vars(subst_index_in_term(repl, "a", e))
        assert got <= (free_index_vars(e) - {"a"}) | free_index_vars(repl)


class TestAlphaEq:
    def test_pi_binders(self):
        x = TPi("a", INT, TCon("list", IVar("a")))
        y = TPi("b", INT, TCon("list", IVar("b")))
        assert alpha_eq(x, y)

    def test_lambdas(self):
        assert alpha_eq(Lam("x", Var("x")), Lam("y", Var("y")))

    def test_free_vars_differ(self):
        assert not alpha_eq(TCon("list", IVar("a")), TCon("list", IVar("b")))

    def test_bound_vs_free(self):
        assert not alpha_eq(Lam("x", Var("x")), Lam("y", Var("x")))

    @given(e=strategies.terms())
    def test_reflexive(self, e):
        assert alpha_eq(e, e)


class TestFreeIndexVars:
    def test_compound_index(self):
        from guardlang.syntax import IAdd

        assert free_index_vars(TCon("list", IAdd(IVar("a"), IVar("b")))) == {
            "a",
            "b",
        }

    def test_pi_binds(self):
        assert free_index_vars(TPi("a", INT, TCon("list", IVar("a")))) == set()

    def test_guard_annotation_counts(self):
        e = Guard(VarDecl("x", TCon("list", IVar("c"))), Unit())
        assert free_index_vars(e) == {"c"}

    def test_idx_guard_subject_counts(self):
        assert free_index_vars(Guard(IdxDecl("a", INT), Unit())) == {"a"}


class TestTermSubstitution:
    def test_beta_renames_captured_binder(self):
        # [y/x](fn y => x y) must not capture y.
        e = Lam("y", Var("x"))
        got = subst_term_var(Var("y"), "x", e)
        assert alpha_eq(got, Lam("z", Var("y")))

    def test_guard_subject_renamed(self):
        e = Guard(VarDecl("x", TUnit()), Var("x"))
        got = subst_term_var(Var("y"), "x", e)
        assert got == Guard(VarDecl("y", TUnit()), Var("y"))

    def test_guard_discharged_by_value(self):
        e = Guard(VarDecl("x", TUnit()), Var("x"))
        got = subst_term_var(Unit(), "x", e)
        assert got == Unit()


def test_fresh_name_deterministic():
    avoid = {"a", "a1", "a2"}
    assert fresh_name("a", avoid) == "a3"
    assert fresh_name("b", avoid) == "b"
