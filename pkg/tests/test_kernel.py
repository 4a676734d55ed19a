import pytest

from hmpst import (
    BOOL,
    Branch,
    END,
    Msg,
    NAT,
    Par,
    ProductSort,
    Rec,
    Recv,
    Send,
    SumSort,
    UNIT,
    Var,
    check_wellformed,
    depth,
    eparts,
    free_vars,
    is_closed,
    is_global,
    is_guarded,
    is_local,
    parts,
)
from hmpst.kernel import BaseSort


def msg(src, dst, *branches):
    return Msg(src, dst, tuple(Branch(l, c, p) for l, c, p in branches))


class TestConstruction:
    def test_branches_are_sorted_by_label(self):
        m = Msg("p", "q", (Branch("b", END), Branch("a", END)))
        assert [b.label for b in m.branches] == ["a", "b"]

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            Msg("p", "q", (Branch("a", END), Branch("a", Var("X"))))

    def test_self_message_rejected(self):
        with pytest.raises(ValueError):
            Msg("p", "p", (Branch("a", END),))

    def test_empty_branching_rejected(self):
        with pytest.raises(ValueError):
            Send("p", "q", ())

    def test_role_names_must_be_lowercase(self):
        with pytest.raises(ValueError):
            Msg("P", "q", (Branch("a", END),))

    def test_variable_names_must_be_uppercase(self):
        with pytest.raises(ValueError):
            Var("x")

    def test_label_names_must_be_lowercase(self):
        with pytest.raises(ValueError):
            Branch("A", END)

    def test_base_sort_names_are_fixed(self):
        with pytest.raises(ValueError):
            BaseSort("float")

    def test_sorts_compose(self):
        s = ProductSort(NAT, SumSort(BOOL, UNIT))
        assert s.left == NAT
        assert s.right.left == BOOL

    def test_values_are_hashable_and_equal_by_structure(self):
        a = msg("p", "q", ("l", END, NAT))
        b = msg("p", "q", ("l", END, NAT))
        assert a == b
        assert hash(a) == hash(b)
        assert len({a, b}) == 1


class TestParticipants:
    def test_msg_contributes_both_roles(self):
        assert parts(msg("p", "q", ("l", END, UNIT))) == {"p", "q"}
        assert eparts(msg("p", "q", ("l", END, UNIT))) == frozenset()

    def test_send_splits_internal_and_external(self):
        h = Send("p", "q", (Branch("l", END),))
        assert parts(h) == {"p"}
        assert eparts(h) == {"q"}

    def test_recv_splits_internal_and_external(self):
        h = Recv("p", "q", (Branch("l", END),))
        assert parts(h) == {"q"}
        assert eparts(h) == {"p"}

    def test_participants_accumulate_through_continuations(self):
        h = msg("p", "q", ("l", Send("r", "s", (Branch("m", END),)), UNIT))
        assert parts(h) == {"p", "q", "r"}
        assert eparts(h) == {"s"}

    def test_free_vars(self):
        h = Rec("X", msg("p", "q", ("l", Var("X"), UNIT), ("m", Var("Y"), UNIT)))
        assert free_vars(h) == {"Y"}
        assert not is_closed(h)

    def test_depth_counts_nesting(self):
        assert depth(END) == 1
        assert depth(Rec("X", msg("p", "q", ("l", Var("X"), UNIT)))) == 3


class TestPredicates:
    def test_guardedness_rejects_bare_loop(self):
        assert not is_guarded(Rec("X", Var("X")))

    def test_guardedness_rejects_rec_chain_to_own_variable(self):
        assert not is_guarded(Rec("X", Rec("Y", Var("X"))))

    def test_rec_over_other_variable_is_guarded(self):
        assert is_guarded(Rec("Q", Var("X")))

    def test_rec_over_end_is_guarded(self):
        assert is_guarded(Rec("X", END))

    def test_guardedness_descends_into_branches(self):
        bad = msg("p", "q", ("l", Rec("X", Var("X")), UNIT))
        assert not is_guarded(bad)

    def test_is_global_excludes_send_and_recv(self):
        assert is_global(msg("p", "q", ("l", END, UNIT)))
        assert not is_global(Send("p", "q", (Branch("l", END),)))
        assert not is_global(msg("p", "q", ("l", Recv("r", "q", (Branch("m", END),)), UNIT)))

    def test_is_local_single_subject_no_carried_messages(self):
        assert is_local(Send("p", "q", (Branch("l", END),)))
        assert is_local(END)
        two_subjects = Send("p", "q", (Branch("l", Send("r", "q", (Branch("m", END),))),))
        assert not is_local(two_subjects)
        assert not is_local(msg("p", "q", ("l", END, UNIT)))


class TestWellformedness:
    def test_clean_type_has_no_diagnostics(self, company):
        assert check_wellformed(company["gdagger"]) == []

    def test_unguarded_recursion_reported(self):
        diags = check_wellformed(Rec("X", Var("X")))
        assert any(d.rule == "unguarded-recursion" for d in diags)

    def test_shadowed_recursion_variable_reported(self):
        h = Rec("X", msg("p", "q", ("l", Rec("X", msg("p", "q", ("m", Var("X"), UNIT))), UNIT)))
        diags = check_wellformed(h)
        assert any(d.rule == "rec-shadowing" for d in diags)

    def test_internal_external_overlap_reported(self):
        h = Send("p", "q", (Branch("l", Recv("p", "q", (Branch("m", END),))),))
        diags = check_wellformed(h)
        assert any(d.rule == "role-overlap" for d in diags)

    def test_par_sides_must_be_closed(self):
        h = Rec("X", Par(msg("p", "q", ("l", Var("X"), UNIT)), END))
        diags = check_wellformed(h)
        assert any(d.rule == "par-open" for d in diags)

    def test_par_sides_must_not_share_roles(self):
        h = Par(msg("p", "q", ("l", END, UNIT)), msg("p", "r", ("m", END, UNIT)))
        diags = check_wellformed(h)
        assert any(d.rule == "par-overlap" for d in diags)

    def test_diagnostic_path_points_into_the_tree(self):
        h = msg("p", "q", ("l", Rec("X", Var("X")), UNIT))
        diags = check_wellformed(h)
        assert diags and diags[0].path == (0,)
        assert "0" in str(diags[0])
