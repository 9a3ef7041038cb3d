import pytest

from tlflow.exceptions import TlvSyntaxError
from tlflow.frontend import (
    ArgKind,
    AssignStatement,
    BinaryOp,
    Call,
    ElementKind,
    Instantiation,
    ScopeEntry,
    SignalRef,
    StageEntry,
    Ternary,
    TokenKind,
    format_tree,
    parse_source,
    tokenize,
)
from tlflow.utils import read_corpus


def _without_comments(source):
    lines = [
        line
        for line in source.splitlines()
        if line.strip() and not line.lstrip().startswith("//")
    ]
    return "\n".join(lines) + "\n"


class TestTokenize:
    @pytest.mark.parametrize(
        ("text", "kind"),
        [
            ("m4+arb2", TokenKind.INSTANTIATE),
            ("/trans$dest", TokenKind.CHILD_REF),
            ("/ring_stop[*]", TokenKind.SCOPE),
            ("|bp3", TokenKind.PIPELINE),
            ("@12", TokenKind.STAGE),
            ("$aa_sq", TokenKind.SIGNAL),
            ("#ring_stop", TokenKind.INDEX),
            ("[7:0]", TokenKind.RANGE),
            ("42", TokenKind.INTEGER),
            ("sqrt", TokenKind.INTRINSIC),
            ("**", TokenKind.OPERATOR),
            ("||", TokenKind.OPERATOR),
        ],
    )
    def test_single_token(self, text, kind):
        tokens = tokenize(text)
        assert [(t.kind, t.text) for t in tokens] == [(kind, text)]

    def test_comments_and_blank_lines(self):
        tokens = tokenize("// header\n\n|calc  // trailing\n")
        assert [t.text for t in tokens] == ["|calc"]
        assert tokens[0].line == 3

    def test_columns_follow_indentation(self):
        tokens = tokenize("|calc\n   @1\n")
        assert [(t.line, t.column) for t in tokens] == [(1, 1), (2, 4)]

    def test_inverted_signal_argument(self):
        kinds = [t.kind for t in tokenize("!$remote")]
        assert kinds == [TokenKind.OPERATOR, TokenKind.SIGNAL]

    @pytest.mark.parametrize(
        ("source", "line", "column"),
        [
            ("|calc\n\t@1\n", 2, 1),
            ("|calc\n   @1\n      $x = `1;\n", 3, 12),
            ("|calc\n   @1\n      $x[0:3] = 1;\n", 3, 9),
        ],
    )
    def test_errors(self, source, line, column):
        with pytest.raises(TlvSyntaxError) as info:
            tokenize(source)
        assert (info.value.line, info.value.column) == (line, column)


class TestParse:
    def test_pythagoras_structure(self):
        tree = parse_source(read_corpus("pythagoras.tlv"))
        (calc,) = tree.root
        assert isinstance(calc, ScopeEntry)
        assert calc.element.kind is ElementKind.PIPELINE
        assert [s.stage for s in calc.children] == [1, 2, 3]
        first = calc.children[0].children[0]
        assert isinstance(first, AssignStatement)
        assert first.lhs.name == "aa_sq"
        assert first.width == (7, 0)
        assert first.rhs == BinaryOp(
            "**", SignalRef("aa", select=(3, 0)), first.rhs.right
        )
        last = calc.children[2].children[0]
        assert isinstance(last.rhs, Call) and last.rhs.name == "sqrt"

    def test_precedence(self):
        tree = parse_source("|p\n   @1\n      $x = $a + $b * $c == $d;\n")
        rhs = tree.root[0].children[0].children[0].rhs
        assert rhs.op == "=="
        assert rhs.left.op == "+"
        assert rhs.left.right.op == "*"

    def test_power_is_right_associative(self):
        tree = parse_source("|p\n   @1\n      $x = $a ** 2 ** 3;\n")
        rhs = tree.root[0].children[0].children[0].rhs
        assert rhs.right.op == "**"

    def test_ternary(self):
        tree = parse_source("|p\n   @1\n      $x = $c ? $a : $b + 1;\n")
        rhs = tree.root[0].children[0].children[0].rhs
        assert isinstance(rhs, Ternary)
        assert rhs.if_false.op == "+"

    def test_reentrant_entries_stay_separate(self):
        tree = parse_source(
            "|p\n   @1\n      $x = 1;\n|p\n   @1\n      $y = 2;\n"
        )
        assert len(tree.root) == 2

    def test_transaction_scope_under_stage(self):
        source = (
            "/s[*]\n   |p\n      @2\n         /trans\n            $a = 1;\n"
        )
        tree = parse_source(source)
        stage = tree.root[0].children[0].children[0]
        assert isinstance(stage, StageEntry)
        assert stage.children[0].element.name == "trans"

    def test_instantiation_arguments(self):
        tree = parse_source(
            "/s[*]\n   m4+opportunistic_flow(/s, |bp3, @1, |bypass, @1, "
            "!$remote, |ring_in, @1, /trans)\n"
        )
        inst = tree.root[0].children[0]
        assert isinstance(inst, Instantiation)
        assert inst.component == "opportunistic_flow"
        assert [a.kind for a in inst.args] == [
            ArgKind.SCOPE,
            ArgKind.PIPELINE,
            ArgKind.STAGE,
            ArgKind.PIPELINE,
            ArgKind.STAGE,
            ArgKind.SIGNAL,
            ArgKind.PIPELINE,
            ArgKind.STAGE,
            ArgKind.SCOPE,
        ]
        assert inst.args[5].inverted and inst.args[5].name == "remote"

    @pytest.mark.parametrize(
        ("source", "message"),
        [
            ("|p\n   $x = 1;\n", "statement outside a stage"),
            ("@1\n", "outside a pipeline"),
            ("|p\n    @1\n      $x = 1;\n  @2\n", "inconsistent dedent"),
            (
                "|p\n   @1\n      $x = 1;\n         $y = 2;\n",
                "unexpected indent",
            ),
            ("|p\n   m4+arb2(/s)\n", "inside a pipeline"),
            (
                "|p\n   @1\n      /t[*]\n         $x = 1;\n",
                "cannot be replicated",
            ),
            ("/s\n   m4+arb2(/s, |a,, @1)\n", "malformed instantiation"),
            ("|p\n   @1\n      $x = 1\n", "unexpected end of line"),
        ],
    )
    def test_errors(self, source, message):
        with pytest.raises(TlvSyntaxError, match=message):
            parse_source(source)


class TestFormatTree:
    @pytest.mark.parametrize(
        "name",
        [
            "pythagoras.tlv",
            "showcase.tlv",
            "showcase_placed.tlv",
            "showcase_early.tlv",
        ],
    )
    def test_corpus_prints_canonically(self, name):
        source = read_corpus(name)
        assert format_tree(parse_source(source)) == _without_comments(source)

    def test_compound_operands_parenthesized(self):
        tree = parse_source("|p\n   @1\n      $x = ($a + $b) * $c;\n")
        assert "$x = ($a + $b) * $c;" in format_tree(tree)
