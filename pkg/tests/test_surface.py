import pytest

from hmpst import (
    Branch,
    END,
    Msg,
    NAT,
    ParseError,
    ProductSort,
    Rec,
    Recv,
    Send,
    SumSort,
    UNIT,
    Undefined,
    Var,
    load_manifest,
    parse_manifest,
    parse_type,
    print_type,
)

from conftest import FIXTURES


class TestParser:
    def test_end(self):
        assert parse_type("end") == END

    def test_variable(self):
        assert parse_type("rec X . X2") == Rec("X", Var("X2"))

    def test_single_branch_message(self):
        assert parse_type("p -> q : hello(nat) . end") == Msg(
            "p", "q", (Branch("hello", END, NAT),)
        )

    def test_unit_payload_is_implicit(self):
        assert parse_type("p -> q : go . end") == Msg("p", "q", (Branch("go", END, UNIT),))
        assert parse_type("p -> q : go(unit) . end") == parse_type("p -> q : go . end")

    def test_branching_with_sorts(self):
        h = parse_type("p ! q { a(int) . end, b((nat + bool)) . end }")
        assert isinstance(h, Send)
        assert h.branches[0].payload.name == "int"
        assert isinstance(h.branches[1].payload, SumSort)

    def test_branches_parse_in_any_order(self):
        assert parse_type("p -> q { b . end, a . end }") == parse_type(
            "p -> q { a . end, b . end }"
        )

    def test_receive_arrowhead(self):
        h = parse_type("p ? q : l . end")
        assert isinstance(h, Recv)
        assert (h.src, h.dst) == ("p", "q")

    def test_nested_product_sort(self):
        h = parse_type("p -> q : l((nat * (nat * nat))) . end")
        s = h.branches[0].payload
        assert s == ProductSort(NAT, ProductSort(NAT, NAT))

    def test_parallel(self):
        h = parse_type("( p -> q : l . end | r -> s : m . end )")
        assert h.left.src == "p" and h.right.src == "r"

    def test_comments_and_whitespace_ignored(self):
        h = parse_type("# header\np -> q : l . # tail\n  end\n")
        assert h == parse_type("p->q:l.end")

    def test_rec_binds_tightly_to_the_right(self):
        h = parse_type("rec X . p -> q { a . X, b . end }")
        assert isinstance(h, Rec)
        assert h.body.branches[0].continuation == Var("X")

    def test_reports_position_on_syntax_error(self):
        with pytest.raises(ParseError) as exc:
            parse_type("p -> q :\n  l . oops")
        assert "line 2" in str(exc.value)

    def test_trailing_input_rejected(self):
        with pytest.raises(ParseError):
            parse_type("end end")

    def test_duplicate_branch_labels_rejected(self):
        with pytest.raises(Undefined) as exc:
            parse_type("p -> q { a . end, a . X }")
        assert exc.value.diagnostic.rule == "duplicate-label"

    def test_self_message_rejected(self):
        with pytest.raises(Undefined) as exc:
            parse_type("p -> p : l . end")
        assert exc.value.diagnostic.rule == "self-message"

    def test_keywords_are_not_identifiers(self):
        with pytest.raises(ParseError):
            parse_type("rec end . end")


class TestPrinter:
    def test_atoms(self):
        assert print_type(END) == "end"
        assert print_type(Var("X")) == "X"

    def test_single_branch_is_inline(self):
        h = parse_type("p -> q : l(nat) . p ! r : m . end")
        assert print_type(h) == "p -> q : l(nat) . p ! r : m . end"

    def test_multi_branch_is_block(self):
        h = parse_type("p -> q { a . end, b . end }")
        assert print_type(h) == "p -> q {\n  a . end,\n  b . end\n}"

    def test_unit_payload_not_printed(self):
        assert "unit" not in print_type(parse_type("p -> q : l(unit) . end"))

    def test_compound_sorts_parenthesised(self):
        h = parse_type("p -> q : l((nat * (nat + bool))) . end")
        assert "l((nat * (nat + bool)))" in print_type(h)

    def test_parallel_layout(self):
        h = parse_type("( end | rec X . p -> q : l . X )")
        assert print_type(h) == "(\n  end\n|\n  rec X . p -> q : l . X\n)"

    def test_no_trailing_newline(self):
        assert not print_type(parse_type("end")).endswith("\n")

    def test_round_trip_on_fixture_corpus(self):
        for path in sorted(FIXTURES.rglob("*.hmpst")):
            if "malformed" in path.name:
                continue
            h = parse_type(path.read_text(encoding="utf-8"))
            printed = print_type(h)
            assert parse_type(printed) == h, path
            assert print_type(parse_type(printed)) == printed, path

    def test_expected_fixtures_are_in_canonical_form(self):
        for path in sorted(FIXTURES.rglob("expected/*.hmpst")):
            text = path.read_text(encoding="utf-8")
            assert print_type(parse_type(text)) + "\n" == text, path


class TestManifest:
    def test_company_manifest_loads(self):
        spec = load_manifest(FIXTURES / "company" / "company.hmanifest")
        assert spec.mode == "standard"
        assert len(spec.components) == 3
        assert spec.components[0].roles == {"d", "ad"}

    def test_optimised_manifest_loads(self):
        spec = load_manifest(FIXTURES / "oauth" / "optimised" / "oauth.hmanifest")
        assert spec.mode == "optimised"
        assert spec.compat_roles == {"oa", "ow"}
        assert len(spec.components) == 1

    def test_relative_paths_resolve_against_manifest_directory(self, tmp_path):
        sub = tmp_path / "inner"
        sub.mkdir()
        (sub / "g.hmpst").write_text("p -> q : l . end\n")
        (sub / "c.hmpst").write_text("p -> q : l . end\n")
        (sub / "m.hmanifest").write_text("compat g.hmpst\ncomponent c.hmpst roles p q\n")
        spec = load_manifest(sub / "m.hmanifest")
        assert spec.components[0].roles == {"p", "q"}

    def test_missing_file_is_a_diagnostic(self, tmp_path):
        m = tmp_path / "m.hmanifest"
        m.write_text("compat nowhere.hmpst\n")
        with pytest.raises(Undefined) as exc:
            load_manifest(m)
        assert exc.value.diagnostic.rule == "missing-file"

    def test_duplicate_compat_rejected(self):
        text = "compat gdagger.hmpst\ncompat gdagger.hmpst\n"
        with pytest.raises(ParseError) as exc:
            parse_manifest(text, FIXTURES / "company")
        assert "duplicate" in str(exc.value)

    def test_unknown_directive_rejected(self):
        with pytest.raises(ParseError):
            parse_manifest("protocol a.hmpst\n", FIXTURES)

    def test_standard_mode_forbids_compat_roles(self):
        text = "compat gdagger.hmpst\ncompat-roles d\ncomponent str.hmpst roles d ad\n"
        with pytest.raises(ParseError):
            parse_manifest(text, FIXTURES / "company")

    def test_manifest_requires_compat(self):
        with pytest.raises(ParseError):
            parse_manifest("component str.hmpst roles d ad\n", FIXTURES / "company")

    def test_component_role_mismatch_is_a_diagnostic(self):
        text = "compat gdagger.hmpst\ncomponent str.hmpst roles d\n"
        with pytest.raises(Undefined) as exc:
            parse_manifest(text, FIXTURES / "company")
        assert exc.value.diagnostic.rule == "manifest-component"
