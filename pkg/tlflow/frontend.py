"""Tokenizing, parsing and canonical printing of TL-Verilog-subset source."""

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

from tlflow.config import CONFIG
from tlflow.exceptions import TlvSyntaxError


class TokenKind(enum.Enum):
    SCOPE = "scope"
    PIPELINE = "pipeline"
    STAGE = "stage"
    SIGNAL = "signal"
    CHILD_REF = "child-ref"
    INDEX = "index"
    IDENT = "identifier"
    INTRINSIC = "intrinsic"
    INTEGER = "integer"
    RANGE = "bit-range"
    OPERATOR = "operator"
    PUNCT = "punctuation"
    INSTANTIATE = "instantiation-keyword"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.kind.value} {self.text}"


_NAME = r"[A-Za-z_]\w*"
_TOKEN_PATTERNS = (
    (TokenKind.INSTANTIATE, rf"m4\+{_NAME}"),
    (TokenKind.CHILD_REF, rf"(?:/{_NAME})+\${_NAME}"),
    (TokenKind.SCOPE, rf"/{_NAME}(?:\[\*\])?"),
    (TokenKind.PIPELINE, rf"\|{_NAME}"),
    (TokenKind.STAGE, r"@\d+"),
    (TokenKind.SIGNAL, rf"\${_NAME}"),
    (TokenKind.INDEX, rf"#{_NAME}"),
    (TokenKind.RANGE, r"\[\d+:\d+\]"),
    (TokenKind.INTEGER, r"\d+"),
    (TokenKind.IDENT, _NAME),
    (
        TokenKind.OPERATOR,
        r"\*\*|==|!=|<=|>=|&&|\|\||[*+\-<>&|^!~?:=]",
    ),
    (TokenKind.PUNCT, r"[;(),]"),
)
_TOKEN_RE = re.compile(
    "|".join(
        f"(?P<{kind.name}>{pattern})" for kind, pattern in _TOKEN_PATTERNS
    )
)
_SPACE_RE = re.compile(r"[ \t]+")


def tokenize(source: str) -> List[Token]:
    """Split source text into tokens.

    Comments (`//` to end of line) and blank lines are dropped. The column
    of the first token of a line is its leading-whitespace depth plus one,
    which is all the parser needs to rebuild nesting.

    :param source: UTF-8 source text of one `.tlv` file.
    :return: list of tokens in stream order.
    :raise TlvSyntaxError: on a tab in leading whitespace, an illegal
    character or a malformed bit range.
    """
    tokens: List[Token] = []
    for line_no, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("//", 1)[0].rstrip()
        if not text.strip():
            continue
        indent = len(text) - len(text.lstrip(" \t"))
        if "\t" in text[:indent]:
            raise TlvSyntaxError(
                "tab in indentation (use spaces)", line_no, 1
            )
        pos = indent
        while pos < len(text):
            space = _SPACE_RE.match(text, pos)
            if space:
                pos = space.end()
                continue
            match = _TOKEN_RE.match(text, pos)
            if match is None:
                raise TlvSyntaxError(
                    f"illegal character {text[pos]!r}", line_no, pos + 1
                )
            kind = TokenKind[match.lastgroup]
            word = match.group()
            if kind is TokenKind.IDENT and word in CONFIG["intrinsics"]:
                kind = TokenKind.INTRINSIC
            if kind is TokenKind.RANGE:
                hi, lo = _range_bounds(word)
                if hi < lo:
                    raise TlvSyntaxError(
                        f"bit range {word} has hi < lo", line_no, pos + 1
                    )
            tokens.append(Token(kind, word, line_no, pos + 1))
            pos = match.end()
    return tokens


def _range_bounds(text: str) -> Tuple[int, int]:
    hi, lo = text[1:-1].split(":")
    return int(hi), int(lo)


# Expressions


@dataclass
class SignalRef:
    """`$name`, `/child$name` or `$ANY`, optionally bit-selected."""

    name: str
    scope: Tuple[str, ...] = ()
    select: Optional[Tuple[int, int]] = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def is_any(self) -> bool:
        return self.name == "ANY"


@dataclass
class IndexRef:
    name: str
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass
class IntLiteral:
    value: int


@dataclass
class UnaryOp:
    op: str
    operand: "Expression"


@dataclass
class BinaryOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass
class Ternary:
    cond: "Expression"
    if_true: "Expression"
    if_false: "Expression"


@dataclass
class Call:
    name: str
    args: List["Expression"]


Expression = Union[
    SignalRef, IndexRef, IntLiteral, UnaryOp, BinaryOp, Ternary, Call
]


def iter_refs(expr: Expression) -> Iterator[Union[SignalRef, IndexRef]]:
    """Yield every signal and index reference of an expression, in order."""
    if isinstance(expr, (SignalRef, IndexRef)):
        yield expr
    elif isinstance(expr, UnaryOp):
        yield from iter_refs(expr.operand)
    elif isinstance(expr, BinaryOp):
        yield from iter_refs(expr.left)
        yield from iter_refs(expr.right)
    elif isinstance(expr, Ternary):
        yield from iter_refs(expr.cond)
        yield from iter_refs(expr.if_true)
        yield from iter_refs(expr.if_false)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from iter_refs(arg)


# Statements and scopes


class ElementKind(enum.Enum):
    HIER = "hier"
    HIER_REPLICATED = "hier-replicated"
    PIPELINE = "pipeline"


@dataclass(frozen=True)
class PathElement:
    kind: ElementKind
    name: str

    def __str__(self) -> str:
        if self.kind is ElementKind.PIPELINE:
            return f"|{self.name}"
        if self.kind is ElementKind.HIER_REPLICATED:
            return f"/{self.name}[*]"
        return f"/{self.name}"


class ArgKind(enum.Enum):
    SCOPE = "scope"
    PIPELINE = "pipeline"
    STAGE = "stage"
    INTEGER = "integer"
    SIGNAL = "signal"


@dataclass
class Argument:
    kind: ArgKind
    name: str = ""
    value: int = 0
    inverted: bool = False

    def __str__(self) -> str:
        if self.kind is ArgKind.SCOPE:
            return f"/{self.name}"
        if self.kind is ArgKind.PIPELINE:
            return f"|{self.name}"
        if self.kind is ArgKind.STAGE:
            return f"@{self.value}"
        if self.kind is ArgKind.INTEGER:
            return str(self.value)
        return f"{'!' if self.inverted else ''}${self.name}"


@dataclass
class AssignStatement:
    lhs: SignalRef
    rhs: Expression
    width: Optional[Tuple[int, int]] = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass
class Instantiation:
    component: str
    args: List[Argument]
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass
class StageEntry:
    stage: int
    children: List["ParseNode"] = field(default_factory=list)
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass
class ScopeEntry:
    element: PathElement
    children: List["ParseNode"] = field(default_factory=list)
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


ParseNode = Union[ScopeEntry, StageEntry, AssignStatement, Instantiation]


@dataclass
class ParseTree:
    root: List[ParseNode] = field(default_factory=list)


class _Cursor:
    """Read position over the tokens of one source line."""

    def __init__(self, tokens: Sequence[Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def at(self, kind: TokenKind, text: Optional[str] = None) -> bool:
        tok = self.peek()
        return (
            tok is not None
            and tok.kind is kind
            and (text is None or tok.text == text)
        )

    def take(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1]
            raise TlvSyntaxError(
                "unexpected end of line",
                last.line,
                last.column + len(last.text),
            )
        self.pos += 1
        return tok

    def expect(self, kind: TokenKind, text: Optional[str] = None) -> Token:
        tok = self.take()
        if tok.kind is not kind or (text is not None and tok.text != text):
            wanted = text if text is not None else kind.value
            raise TlvSyntaxError(
                f"expected {wanted}, found '{tok.text}'", tok.line, tok.column
            )
        return tok

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", ">", "<=", ">="),
    ("+", "-"),
    ("*",),
)


def _parse_expression(cur: _Cursor) -> Expression:
    cond = _parse_binary(cur, 0)
    if cur.at(TokenKind.OPERATOR, "?"):
        cur.take()
        if_true = _parse_expression(cur)
        cur.expect(TokenKind.OPERATOR, ":")
        if_false = _parse_expression(cur)
        return Ternary(cond, if_true, if_false)
    return cond


def _parse_binary(cur: _Cursor, level: int) -> Expression:
    if level == len(_BINARY_LEVELS):
        return _parse_power(cur)
    left = _parse_binary(cur, level + 1)
    while (
        cur.peek() is not None
        and cur.peek().kind is TokenKind.OPERATOR
        and cur.peek().text in _BINARY_LEVELS[level]
    ):
        op = cur.take().text
        left = BinaryOp(op, left, _parse_binary(cur, level + 1))
    return left


def _parse_power(cur: _Cursor) -> Expression:
    base = _parse_unary(cur)
    if cur.at(TokenKind.OPERATOR, "**"):
        cur.take()
        return BinaryOp("**", base, _parse_power(cur))
    return base


def _parse_unary(cur: _Cursor) -> Expression:
    tok = cur.peek()
    if (
        tok is not None
        and tok.kind is TokenKind.OPERATOR
        and tok.text in ("!", "~", "-")
    ):
        cur.take()
        return UnaryOp(tok.text, _parse_unary(cur))
    return _parse_primary(cur)


def _parse_primary(cur: _Cursor) -> Expression:
    tok = cur.take()
    if tok.kind is TokenKind.SIGNAL:
        ref = SignalRef(tok.text[1:], (), None, tok.line, tok.column)
        return _with_select(cur, ref)
    if tok.kind is TokenKind.CHILD_REF:
        path, name = tok.text.rsplit("$", 1)
        scope = tuple(part for part in path.split("/") if part)
        ref = SignalRef(name, scope, None, tok.line, tok.column)
        return _with_select(cur, ref)
    if tok.kind is TokenKind.INDEX:
        return IndexRef(tok.text[1:], tok.line, tok.column)
    if tok.kind is TokenKind.INTEGER:
        return IntLiteral(int(tok.text))
    if tok.kind is TokenKind.INTRINSIC:
        cur.expect(TokenKind.PUNCT, "(")
        args = [_parse_expression(cur)]
        while cur.at(TokenKind.PUNCT, ","):
            cur.take()
            args.append(_parse_expression(cur))
        cur.expect(TokenKind.PUNCT, ")")
        return Call(tok.text, args)
    if tok.kind is TokenKind.PUNCT and tok.text == "(":
        inner = _parse_expression(cur)
        cur.expect(TokenKind.PUNCT, ")")
        return inner
    raise TlvSyntaxError(
        f"unexpected '{tok.text}' in expression", tok.line, tok.column
    )


def _with_select(cur: _Cursor, ref: SignalRef) -> SignalRef:
    if cur.at(TokenKind.RANGE):
        ref.select = _range_bounds(cur.take().text)
    return ref


def _parse_assignment(cur: _Cursor) -> AssignStatement:
    head = cur.expect(TokenKind.SIGNAL)
    lhs = SignalRef(head.text[1:], (), None, head.line, head.column)
    width = None
    if cur.at(TokenKind.RANGE):
        width = _range_bounds(cur.take().text)
        if lhs.is_any:
            raise TlvSyntaxError(
                "$ANY cannot declare a width", head.line, head.column
            )
    cur.expect(TokenKind.OPERATOR, "=")
    rhs = _parse_expression(cur)
    cur.expect(TokenKind.PUNCT, ";")
    if not cur.done():
        extra = cur.peek()
        raise TlvSyntaxError(
            f"unexpected '{extra.text}' after statement",
            extra.line,
            extra.column,
        )
    return AssignStatement(lhs, rhs, width, head.line, head.column)


def _parse_argument(cur: _Cursor) -> Argument:
    tok = cur.take()
    if tok.kind is TokenKind.SCOPE:
        return Argument(ArgKind.SCOPE, tok.text[1:].replace("[*]", ""))
    if tok.kind is TokenKind.PIPELINE:
        return Argument(ArgKind.PIPELINE, tok.text[1:])
    if tok.kind is TokenKind.STAGE:
        return Argument(ArgKind.STAGE, value=int(tok.text[1:]))
    if tok.kind is TokenKind.INTEGER:
        return Argument(ArgKind.INTEGER, value=int(tok.text))
    if tok.kind is TokenKind.SIGNAL:
        return Argument(ArgKind.SIGNAL, tok.text[1:])
    if tok.kind is TokenKind.OPERATOR and tok.text == "!":
        sig = cur.expect(TokenKind.SIGNAL)
        return Argument(ArgKind.SIGNAL, sig.text[1:], inverted=True)
    raise TlvSyntaxError(
        f"malformed instantiation argument list at '{tok.text}'",
        tok.line,
        tok.column,
    )


def _parse_instantiation(cur: _Cursor) -> Instantiation:
    head = cur.expect(TokenKind.INSTANTIATE)
    try:
        cur.expect(TokenKind.PUNCT, "(")
        args = []
        if not cur.at(TokenKind.PUNCT, ")"):
            args.append(_parse_argument(cur))
            while cur.at(TokenKind.PUNCT, ","):
                cur.take()
                args.append(_parse_argument(cur))
        cur.expect(TokenKind.PUNCT, ")")
        if cur.at(TokenKind.PUNCT, ";"):
            cur.take()
        if not cur.done():
            raise TlvSyntaxError("trailing tokens", head.line, head.column)
    except TlvSyntaxError as e:
        raise TlvSyntaxError(
            f"malformed instantiation argument list: {e.message}",
            e.line,
            e.column,
        ) from e
    return Instantiation(head.text[3:], args, head.line, head.column)


def _parse_line(tokens: Sequence[Token]) -> ParseNode:
    first = tokens[0]
    cur = _Cursor(tokens)
    if first.kind is TokenKind.INSTANTIATE:
        return _parse_instantiation(cur)
    if first.kind is TokenKind.SIGNAL:
        return _parse_assignment(cur)
    if len(tokens) != 1:
        extra = tokens[1]
        raise TlvSyntaxError(
            f"unexpected '{extra.text}' after {first.kind.value}",
            extra.line,
            extra.column,
        )
    if first.kind is TokenKind.STAGE:
        return StageEntry(int(first.text[1:]), [], first.line, first.column)
    if first.kind is TokenKind.PIPELINE:
        element = PathElement(ElementKind.PIPELINE, first.text[1:])
        return ScopeEntry(element, [], first.line, first.column)
    if first.kind is TokenKind.SCOPE:
        if first.text.endswith("[*]"):
            element = PathElement(
                ElementKind.HIER_REPLICATED, first.text[1:-3]
            )
        else:
            element = PathElement(ElementKind.HIER, first.text[1:])
        return ScopeEntry(element, [], first.line, first.column)
    raise TlvSyntaxError(
        f"a line cannot start with '{first.text}'", first.line, first.column
    )


def _check_context(node: ParseNode, owners: Sequence[ParseNode]) -> None:
    """Reject nodes placed where the grammar does not allow them."""
    in_stage = any(isinstance(owner, StageEntry) for owner in owners)
    in_pipeline = any(
        isinstance(owner, ScopeEntry)
        and owner.element.kind is ElementKind.PIPELINE
        for owner in owners
    )
    parent = owners[-1] if owners else None
    where = (node.line, node.column)
    if isinstance(node, StageEntry):
        if not (
            isinstance(parent, ScopeEntry)
            and parent.element.kind is ElementKind.PIPELINE
        ):
            raise TlvSyntaxError(
                f"stage @{node.stage} outside a pipeline", *where
            )
    elif isinstance(node, AssignStatement):
        if not in_stage:
            raise TlvSyntaxError("statement outside a stage", *where)
    elif isinstance(node, Instantiation):
        if in_pipeline:
            raise TlvSyntaxError(
                f"instantiation of '{node.component}' inside a pipeline",
                *where,
            )
    elif node.element.kind is ElementKind.PIPELINE:
        if in_pipeline:
            raise TlvSyntaxError(
                f"pipeline {node.element} nested inside a pipeline", *where
            )
    elif in_pipeline and not in_stage:
        raise TlvSyntaxError(
            f"scope {node.element} must be opened inside a stage", *where
        )
    elif in_stage and node.element.kind is ElementKind.HIER_REPLICATED:
        raise TlvSyntaxError(
            f"transaction scope {node.element} cannot be replicated", *where
        )


def parse(tokens: Sequence[Token]) -> ParseTree:
    """Build the indentation-derived statement tree of one source file.

    A line indented deeper than the line before it opens one nesting level
    under that line; a shallower line must return to a depth already
    opened. Same-named scope entries stay separate sibling nodes.

    :param tokens: output of `tokenize`.
    :return: ParseTree with children in source order.
    :raise TlvSyntaxError: on inconsistent dedent, a statement outside a
    stage, or a malformed instantiation argument list.
    """
    tree = ParseTree()
    lines: List[List[Token]] = []
    for tok in tokens:
        if lines and lines[-1][0].line == tok.line:
            lines[-1].append(tok)
        else:
            lines.append([tok])
    if not lines:
        return tree

    # entries: (depth of the children, their list, the owning node)
    stack: List[Tuple[int, List[ParseNode], Optional[ParseNode]]] = [
        (lines[0][0].column - 1, tree.root, None)
    ]
    last: Optional[ParseNode] = None
    for line_tokens in lines:
        first = line_tokens[0]
        depth = first.column - 1
        if depth > stack[-1][0]:
            if not isinstance(last, (ScopeEntry, StageEntry)):
                raise TlvSyntaxError(
                    "unexpected indent", first.line, first.column
                )
            stack.append((depth, last.children, last))
        elif depth < stack[-1][0]:
            while stack and stack[-1][0] > depth:
                stack.pop()
            if not stack or stack[-1][0] != depth:
                raise TlvSyntaxError(
                    "inconsistent dedent: no enclosing line at this depth",
                    first.line,
                    first.column,
                )
        node = _parse_line(line_tokens)
        _check_context(node, [owner for _, _, owner in stack if owner])
        stack[-1][1].append(node)
        last = node
    logging.debug("Parsed %d source lines.", len(lines))
    return tree


def parse_source(source: str) -> ParseTree:
    """Convenience wrapper: `parse(tokenize(source))`."""
    return parse(tokenize(source))


# Canonical printing


def format_expression(expr: Expression, nested: bool = False) -> str:
    """Print an expression; compound operands are fully parenthesized."""
    if isinstance(expr, SignalRef):
        scope = "".join(f"/{name}" for name in expr.scope)
        select = f"[{expr.select[0]}:{expr.select[1]}]" if expr.select else ""
        return f"{scope}${expr.name}{select}"
    if isinstance(expr, IndexRef):
        return f"#{expr.name}"
    if isinstance(expr, IntLiteral):
        return str(expr.value)
    if isinstance(expr, Call):
        args = ", ".join(format_expression(arg) for arg in expr.args)
        return f"{expr.name}({args})"
    if isinstance(expr, UnaryOp):
        text = f"{expr.op}{format_expression(expr.operand, True)}"
    elif isinstance(expr, BinaryOp):
        text = (
            f"{format_expression(expr.left, True)} {expr.op} "
            f"{format_expression(expr.right, True)}"
        )
    else:
        text = (
            f"{format_expression(expr.cond, True)} ? "
            f"{format_expression(expr.if_true, True)} : "
            f"{format_expression(expr.if_false, True)}"
        )
    return f"({text})" if nested else text


def format_statement(node: ParseNode) -> str:
    """Print the head line of one node (no indentation, no children)."""
    if isinstance(node, AssignStatement):
        width = f"[{node.width[0]}:{node.width[1]}]" if node.width else ""
        return (
            f"${node.lhs.name}{width} = {format_expression(node.rhs)};"
        )
    if isinstance(node, Instantiation):
        args = ", ".join(str(arg) for arg in node.args)
        return f"m4+{node.component}({args})"
    if isinstance(node, StageEntry):
        return f"@{node.stage}"
    return str(node.element)


def format_tree(
    tree: ParseTree, indent_width: int = CONFIG["indent_width"]
) -> str:
    """Pretty-print a ParseTree with canonical indentation."""
    lines: List[str] = []

    def emit(nodes: Sequence[ParseNode], depth: int) -> None:
        for node in nodes:
            lines.append(" " * (indent_width * depth) + format_statement(node))
            if isinstance(node, (ScopeEntry, StageEntry)):
                emit(node.children, depth + 1)

    emit(tree.root, 0)
    return "\n".join(lines) + ("\n" if lines else "")
