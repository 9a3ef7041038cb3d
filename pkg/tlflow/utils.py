"""Utility functions for use across modules: widths, names, text counting."""

import re
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

from tlflow.config import CONFIG
from tlflow.exceptions import ConfigError, FlowError
from tlflow.frontend import (
    BinaryOp,
    Call,
    Expression,
    IndexRef,
    IntLiteral,
    SignalRef,
    Ternary,
    UnaryOp,
)

CORPUS_DIR = Path(__file__).parent / "corpus"

_COMPARISONS = ("==", "!=", "<", ">", "<=", ">=", "&&", "||")


def clog2(n: int) -> int:
    """Bits needed to number `n` distinct values (at least 1)."""
    assert n >= 1
    return max(1, (n - 1).bit_length())


def mask(width: int) -> int:
    return (1 << width) - 1


def literal_width(value: int) -> int:
    return max(1, value.bit_length())


def operator_width(
    op: str, widths: Sequence[int], exponent: Optional[int] = None
) -> int:
    """Result width of an operator given its operand widths.

    Results never overflow: `+` gains a bit, `*` sums widths, `**` by a
    constant multiplies it, `sqrt` halves it (rounded up).
    """
    if op in _COMPARISONS or op == "!":
        return 1
    if op in ("~", "neg"):
        return widths[0]
    if op == "+":
        return max(widths) + 1
    if op in ("-", "&", "|", "^", "?:"):
        return max(widths)
    if op == "*":
        return sum(widths)
    if op == "**":
        assert exponent is not None
        return max(1, widths[0] * exponent)
    if op == "sqrt":
        return max(1, (widths[0] + 1) // 2)
    raise AssertionError(f"unknown operator {op}")


def constant_exponent(expr: BinaryOp) -> int:
    if not isinstance(expr.right, IntLiteral):
        raise FlowError(
            "the exponent of ** must be an integer constant",
            getattr(expr.left, "line", None),
        )
    return expr.right.value


def expression_width(
    expr: Expression,
    width_of: Callable[[SignalRef], int],
    index_width: Callable[[IndexRef], int] = lambda ref: 1,
) -> int:
    """Width of an expression's value.

    :param expr: expression tree from the frontend.
    :param width_of: width of a signal reference without a bit-select.
    :param index_width: width of an index constant.
    """
    if isinstance(expr, SignalRef):
        if expr.select is not None:
            return expr.select[0] - expr.select[1] + 1
        return width_of(expr)
    if isinstance(expr, IndexRef):
        return index_width(expr)
    if isinstance(expr, IntLiteral):
        return literal_width(expr.value)
    if isinstance(expr, UnaryOp):
        op = "neg" if expr.op == "-" else expr.op
        return operator_width(
            op, [expression_width(expr.operand, width_of, index_width)]
        )
    if isinstance(expr, BinaryOp):
        left = expression_width(expr.left, width_of, index_width)
        if expr.op == "**":
            return operator_width("**", [left], constant_exponent(expr))
        right = expression_width(expr.right, width_of, index_width)
        return operator_width(expr.op, [left, right])
    if isinstance(expr, Ternary):
        return operator_width(
            "?:",
            [
                expression_width(expr.if_true, width_of, index_width),
                expression_width(expr.if_false, width_of, index_width),
            ],
        )
    assert isinstance(expr, Call)
    return operator_width(
        expr.name, [expression_width(expr.args[0], width_of, index_width)]
    )


def sanitize_identifier(text: str) -> str:
    """Turn a scope/stage label into a legal Verilog/Python identifier."""
    name = re.sub(r"\W+", "_", text).strip("_")
    if not name:
        return "n"
    if name[0].isdigit():
        name = f"n{name}"
    return name


def count_code_chars(text: str, block_comments: bool = False) -> int:
    """Count characters that are neither whitespace nor inside a comment."""
    if block_comments:
        text = re.sub(r"/\*.*?\*/", "", text, flags=re.DOTALL)
    text = re.sub(r"//[^\n]*", "", text)
    return sum(1 for char in text if not char.isspace())


def corpus_path(name: str) -> Path:
    return CORPUS_DIR / name


def read_corpus(name: str) -> str:
    """Source text of a design bundled with the package."""
    return corpus_path(name).read_text(encoding="utf-8")


def _convert(key: str, text: str, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = (item.strip() for item in text.split(","))
            return tuple(item for item in items if item)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {text!r}") from exc
    return text


def read_config_file(
    path: str, base: Dict[str, Any] = CONFIG
) -> Dict[str, Any]:
    """Read `key=value` lines into a dict typed after `base`.

    Blank lines and `#` comments are ignored.

    :param path: path of the configuration file.
    :param base: dict whose value types drive conversion.
    :return: dict with only the keys present in the file.
    :raise ConfigError: on an unknown key, a malformed line or a value that
    does not convert.
    """
    result: Dict[str, Any] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw!r}", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in base:
            raise ConfigError(f"unknown configuration key {key!r}", number)
        result[key] = _convert(key, value, base[key])
    return result
