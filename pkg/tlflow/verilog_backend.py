"""Verilog-2001 emission of a Netlist and code-size metrics."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

import tabulate

from tlflow.config import CONFIG
from tlflow.staging import Netlist, Node, NodeKind
from tlflow.utils import count_code_chars, sanitize_identifier

INDENT = "   "

_KEYWORDS = frozenset(
    (
        "always assign begin buf case default else end endcase endfunction "
        "endmodule for function if initial inout input integer module "
        "nand negedge nor not or output posedge reg wire xnor xor and "
        "clk reset"
    ).split()
)

_INFIX = {
    "add": "+",
    "sub": "-",
    "mul": "*",
    "eq": "==",
    "ne": "!=",
    "lt": "<",
    "gt": ">",
    "le": "<=",
    "ge": ">=",
    "and": "&",
    "or": "|",
    "xor": "^",
    "land": "&&",
    "lor": "||",
}
_PREFIX = {"not": "~", "lnot": "!", "neg": "-"}


@dataclass(frozen=True)
class VerilogModuleText:
    name: str
    ports: Tuple[str, ...]
    body: str

    @property
    def text(self) -> str:
        ports = f",\n{INDENT}".join(self.ports)
        return (
            f"module {self.name} (\n{INDENT}{ports}\n);\n"
            f"{self.body}endmodule\n"
        )


def _range(width: int) -> str:
    return f"[{width - 1}:0]"


def _sqrt_width(width: int) -> int:
    return max(1, (width + 1) // 2)


class _Namer:
    """Sanitized, collision-suffixed identifiers, one per node."""

    def __init__(self, reserved: Set[str]) -> None:
        self.used: Set[str] = set(reserved)
        self.names: Dict[int, str] = {}

    def claim(self, node_id: int, base: str) -> str:
        name = sanitize_identifier(base)
        if name in _KEYWORDS:
            name = f"{name}_s"
        candidate, suffix = name, 1
        while candidate in self.used:
            candidate = f"{name}_{suffix}"
            suffix += 1
        self.used.add(candidate)
        self.names[node_id] = candidate
        return candidate


def _base_name(node: Node) -> str:
    if node.kind in (NodeKind.INPUT, NodeKind.OUTPUT):
        return node.name
    if node.kind is NodeKind.REGISTER:
        return node.source or f"r{node.id}"
    return f"{node.source or 'n'}_{node.op}"


def _sqrt_function(width: int) -> str:
    out = _sqrt_width(width)
    lines = [
        f"function {_range(out)} isqrt{width};",
        f"{INDENT}input {_range(width)} value;",
        f"{INDENT}reg {_range(out)} root;",
        f"{INDENT}reg {_range(out)} trial;",
        f"{INDENT}reg {_range(2 * out)} square;",
        f"{INDENT}integer i;",
        f"{INDENT}begin",
        f"{INDENT * 2}root = {out}'d0;",
        f"{INDENT * 2}for (i = {out - 1}; i >= 0; i = i - 1) begin",
        f"{INDENT * 3}trial = root | ({out}'d1 << i);",
        f"{INDENT * 3}square = trial * trial;",
        f"{INDENT * 3}if (square <= value)",
        f"{INDENT * 4}root = trial;",
        f"{INDENT * 2}end",
        f"{INDENT * 2}isqrt{width} = root;",
        f"{INDENT}end",
        "endfunction",
    ]
    return "\n".join(lines) + "\n"


class _Emitter:
    def __init__(self, netlist: Netlist) -> None:
        self.netlist = netlist
        sqrt_widths = sorted(
            {
                netlist.nodes[node.operands[0]].width
                for node in netlist.nodes
                if node.kind is NodeKind.COMB and node.op == "sqrt"
            }
        )
        self.sqrt_widths = sqrt_widths
        self.namer = _Namer({f"isqrt{w}" for w in sqrt_widths})
        for kind in (
            NodeKind.INPUT,
            NodeKind.OUTPUT,
            NodeKind.REGISTER,
            NodeKind.COMB,
        ):
            for node in netlist.nodes:
                if node.kind is kind:
                    self.namer.claim(node.id, _base_name(node))

    def ref(self, node_id: int) -> str:
        node = self.netlist.nodes[node_id]
        if node.kind is NodeKind.CONST:
            return f"{node.width}'d{node.value}"
        return self.namer.names[node_id]

    def expression(self, node: Node) -> str:
        args = [self.ref(o) for o in node.operands]
        if node.op in _INFIX:
            return f"{args[0]} {_INFIX[node.op]} {args[1]}"
        if node.op in _PREFIX:
            return f"{_PREFIX[node.op]}{args[0]}"
        if node.op == "mux":
            return f"{args[0]} ? {args[1]} : {args[2]}"
        if node.op == "pow":
            (exponent,) = node.params
            if exponent == 0:
                return f"{node.width}'d1"
            return " * ".join([args[0]] * exponent)
        if node.op == "slice":
            hi, lo = node.params
            return f"{args[0]}[{hi}:{lo}]" if hi != lo else f"{args[0]}[{hi}]"
        if node.op == "resize":
            width = self.netlist.nodes[node.operands[0]].width
            if node.width < width:
                return f"{args[0]}[{node.width - 1}:0]"
            return f"{{{node.width - width}'d0, {args[0]}}}"
        if node.op == "sqrt":
            width = self.netlist.nodes[node.operands[0]].width
            return f"isqrt{width}({args[0]})"
        raise AssertionError(f"no Verilog form for operator {node.op}")

    def ports(self) -> Tuple[str, ...]:
        ports = ["input wire clk", "input wire reset"]
        for node_id in self.netlist.inputs:
            node = self.netlist.nodes[node_id]
            ports.append(
                f"input wire {_range(node.width)} {self.ref(node_id)}"
            )
        for node_id in self.netlist.outputs:
            node = self.netlist.nodes[node_id]
            ports.append(
                f"output wire {_range(node.width)} {self.ref(node_id)}"
            )
        return tuple(ports)

    def body(self) -> str:
        nodes = self.netlist.nodes
        sections: List[str] = []
        sections.extend(_sqrt_function(w) for w in self.sqrt_widths)
        regs = [
            f"reg {_range(nodes[r].width)} {self.ref(r)};"
            for r in self.netlist.registers
        ]
        if regs:
            sections.append("\n".join(regs) + "\n")
        wires = []
        assigns = []
        for node_id in self.netlist.schedule:
            node = nodes[node_id]
            if node.kind is NodeKind.COMB:
                wires.append(
                    f"wire {_range(node.width)} {self.ref(node_id)} = "
                    f"{self.expression(node)};"
                )
            else:
                assigns.append(
                    f"assign {self.ref(node_id)} = "
                    f"{self.ref(node.operands[0])};"
                )
        if wires:
            sections.append("\n".join(wires) + "\n")
        if assigns:
            sections.append("\n".join(assigns) + "\n")
        sections.extend(self.always_blocks())
        return "\n".join(sections)

    def always_blocks(self) -> List[str]:
        groups: Dict[str, List[int]] = {}
        for reg in self.netlist.registers:
            groups.setdefault(self.netlist.nodes[reg].group, []).append(reg)
        blocks = []
        for name, regs in groups.items():
            lines = [f"// {name}"] if name else []
            lines.append("always @(posedge clk) begin")
            lines.append(f"{INDENT}if (reset) begin")
            for reg in regs:
                width = self.netlist.nodes[reg].width
                lines.append(f"{INDENT * 2}{self.ref(reg)} <= {width}'d0;")
            lines.append(f"{INDENT}end else begin")
            for reg in regs:
                driver = self.netlist.nodes[reg].operands[0]
                lines.append(
                    f"{INDENT * 2}{self.ref(reg)} <= {self.ref(driver)};"
                )
            lines.append(f"{INDENT}end")
            lines.append("end")
            blocks.append("\n".join(lines) + "\n")
        return blocks


def emit_verilog(
    netlist: Netlist, module_name: str = CONFIG["verilog_module_name"]
) -> VerilogModuleText:
    """Render a netlist as one Verilog-2001 module.

    Combinational nodes become `wire` declarations with their driving
    expression, in evaluation order. Registers are grouped into one
    `always @(posedge clk)` block per register group and reset to 0.
    Integer square roots become a `function` per operand width.

    :param netlist: acyclic Netlist from `staging.build_netlist`.
    :param module_name: name of the emitted module.
    :return: VerilogModuleText; `.text` is byte-identical across runs.
    """
    assert netlist.schedule or not netlist.outputs, "netlist is not scheduled"
    emitter = _Emitter(netlist)
    module = VerilogModuleText(
        sanitize_identifier(module_name), emitter.ports(), emitter.body()
    )
    logging.info(
        "Emitted module %s: %d ports, %d register groups.",
        module.name,
        len(module.ports),
        len({netlist.nodes[r].group for r in netlist.registers}),
    )
    return module


@dataclass(frozen=True)
class CodeMetrics:
    source_chars: int = 0
    expanded_chars: int = 0
    verilog_chars: int = 0

    @staticmethod
    def _ratio(numerator: int, denominator: int) -> Optional[float]:
        return numerator / denominator if denominator > 0 else None

    @property
    def expansion_ratio(self) -> Optional[float]:
        """Expanded flow characters per user source character."""
        return self._ratio(self.expanded_chars, self.source_chars)

    @property
    def generation_ratio(self) -> Optional[float]:
        """Verilog characters per expanded flow character."""
        return self._ratio(self.verilog_chars, self.expanded_chars)

    @property
    def total_ratio(self) -> Optional[float]:
        return self._ratio(self.verilog_chars, self.source_chars)

    def __sub__(self, other: "CodeMetrics") -> "CodeMetrics":
        return CodeMetrics(
            self.source_chars - other.source_chars,
            self.expanded_chars - other.expanded_chars,
            self.verilog_chars - other.verilog_chars,
        )


def measure_code(source: str, expanded: str, verilog: str) -> CodeMetrics:
    """Count code characters (no whitespace, no comments) of three artifacts.

    :param source: user TL-Verilog source.
    :param expanded: expanded flat form (`scope_graph.dump_scope_graph`).
    :param verilog: emitted Verilog text.
    """
    return CodeMetrics(
        count_code_chars(source, block_comments=True),
        count_code_chars(expanded),
        count_code_chars(verilog, block_comments=True),
    )


def _format_ratio(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.1f}x"


def format_metrics(metrics: CodeMetrics) -> str:
    """Aligned table of counts and ratios, then `key=value` lines."""
    rows = [
        ["user source", metrics.source_chars],
        ["expanded flow", metrics.expanded_chars],
        ["verilog", metrics.verilog_chars],
        ["expanded / source", _format_ratio(metrics.expansion_ratio)],
        ["verilog / expanded", _format_ratio(metrics.generation_ratio)],
    ]
    table = tabulate.tabulate(
        rows, headers=["artifact", "characters"], tablefmt="simple"
    )
    keys = [
        f"source_chars={metrics.source_chars}",
        f"expanded_chars={metrics.expanded_chars}",
        f"verilog_chars={metrics.verilog_chars}",
    ]
    for key, value in (
        ("expanded_over_source", metrics.expansion_ratio),
        ("verilog_over_expanded", metrics.generation_ratio),
        ("verilog_over_source", metrics.total_ratio),
    ):
        keys.append(f"{key}={'n/a' if value is None else f'{value:.2f}'}")
    return table + "\n\n" + "\n".join(keys) + "\n"
