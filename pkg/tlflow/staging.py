"""Stage planning and netlist construction.

The netlist is built on demand: asking for a signal (a field at a flow
point, a stage valid, an entry ready) builds exactly the logic behind it,
memoized per replicated instance. Registers are created before their data
input, which is filled in from a work list, so sequential feedback never
recurses. Any recursion that does close on itself is a combinational cycle.
"""

import enum
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import (
    Callable,
    Deque,
    Dict,
    Hashable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import networkx as nx

from tlflow.config import CONFIG
from tlflow.exceptions import CombinationalCycleError, StagingError
from tlflow.flow_resolver import (
    FlowGraph,
    FlowPoint,
    Production,
    ProductionKind,
)
from tlflow.frontend import (
    BinaryOp,
    Call,
    ElementKind,
    Expression,
    IndexRef,
    IntLiteral,
    SignalRef,
    Ternary,
    UnaryOp,
)
from tlflow.scope_graph import (
    Channel,
    ComponentInstance,
    FlowSink,
    FlowSource,
    HoldGroup,
    ScopeGraph,
    ScopePath,
    StagePoint,
    Trans,
)
from tlflow.utils import (
    clog2,
    constant_exponent,
    literal_width,
    mask,
    operator_width,
)

Inst = Tuple[int, ...]


# Stage planning


@dataclass(frozen=True)
class StageSpan:
    """Where one field lives inside one pipeline, and what staging it needs."""

    field: str
    pipeline: ScopePath
    trans: Trans
    first: int
    last: int
    registers: int


@dataclass(frozen=True)
class StagePlan:
    spans: Tuple[StageSpan, ...] = ()

    def registers(
        self, name: str, pipeline: Optional[ScopePath] = None
    ) -> int:
        return sum(
            span.registers
            for span in self.spans
            if span.field == name and pipeline in (None, span.pipeline)
        )


def plan_stages(graph: ScopeGraph, fg: FlowGraph) -> StagePlan:
    """Compute, per field and pipeline, the stage span and register count.

    :param graph: resolved ScopeGraph.
    :param fg: FlowGraph after `resolve_fields`.
    :return: StagePlan sorted by field, pipeline and transaction scope.
    :raise StagingError: when a field is consumed in a pipeline at an earlier
    stage than the one producing it.
    """
    assert graph.resolved and fg.resolved
    for demand in fg.retrograde:
        raise StagingError(
            f"${demand.name} is consumed at {demand.point} before it is "
            f"assigned at a later stage of {demand.point.pipeline}",
            demand.line,
            demand.column,
        )
    spans = []
    for name, record in sorted(fg.fields.items()):
        stages: Dict[Tuple[ScopePath, Trans], List[int]] = {}
        registers: Dict[Tuple[ScopePath, Trans], int] = {}
        points = list(record.producers) + list(record.consumers)
        for upstream, downstream, key in record.route:
            points.extend((upstream, downstream))
            if key == "stage":
                group = (downstream.pipeline, downstream.trans)
                registers[group] = registers.get(group, 0) + 1
        for point in points:
            key = (point.pipeline, point.trans)
            stages.setdefault(key, []).append(point.stage)
        for (pipeline, trans), numbers in stages.items():
            spans.append(
                StageSpan(
                    name,
                    pipeline,
                    trans,
                    min(numbers),
                    max(numbers),
                    registers.get((pipeline, trans), 0),
                )
            )
    spans.sort(key=lambda s: (s.field, str(s.pipeline), s.trans))
    logging.info(
        "Planned %d staging registers over %d spans.",
        sum(s.registers for s in spans),
        len(spans),
    )
    return StagePlan(tuple(spans))


# Netlist


class NodeKind(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"
    REGISTER = "reg"
    COMB = "comb"
    CONST = "const"


@dataclass(frozen=True)
class Node:
    """One netlist node.

    `operands` holds the data input of a register and the driver of an
    output. `params` holds constant operator parameters (slice bounds,
    exponents).
    """

    id: int
    kind: NodeKind
    width: int
    op: str = ""
    operands: Tuple[int, ...] = ()
    params: Tuple[int, ...] = ()
    value: int = 0
    name: str = ""
    source: str = ""
    group: str = ""


class ProbeKind(enum.Enum):
    OCCUPANCY = "occupancy"
    BYPASS_TAKEN = "bypass_taken"
    FORCED_ONTO_RING = "forced_onto_ring"


@dataclass(frozen=True)
class Probe:
    name: str
    node: int
    kind: ProbeKind
    stop: int = 0


@dataclass(frozen=True)
class PortBinding:
    """Netlist I/O of one testbench stop: a source and a sink interface."""

    stop: int
    source_valid: int
    source_ready: int
    source_fields: Tuple[Tuple[str, int], ...]
    sink_valid: int
    sink_ready: int
    sink_fields: Tuple[Tuple[str, int], ...]


@dataclass(frozen=True, eq=False)
class Netlist:
    nodes: Tuple[Node, ...] = ()
    inputs: Tuple[int, ...] = ()
    outputs: Tuple[int, ...] = ()
    registers: Tuple[int, ...] = ()
    schedule: Tuple[int, ...] = ()
    probes: Tuple[Probe, ...] = ()
    ports: Tuple[PortBinding, ...] = ()
    stimulus: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.nodes)

    def by_name(self, name: str) -> Node:
        for node_id in self.inputs + self.outputs:
            if self.nodes[node_id].name == name:
                return self.nodes[node_id]
        raise KeyError(name)

    def count(self, kind: NodeKind, op: Optional[str] = None) -> int:
        return sum(
            1
            for node in self.nodes
            if node.kind is kind and (op is None or node.op == op)
        )

    def describe(self, node_id: int) -> str:
        node = self.nodes[node_id]
        return node.name or node.source or f"n{node_id}"


_BINARY_OPS = {
    "+": "add",
    "-": "sub",
    "*": "mul",
    "**": "pow",
    "==": "eq",
    "!=": "ne",
    "<": "lt",
    ">": "gt",
    "<=": "le",
    ">=": "ge",
    "&": "and",
    "|": "or",
    "^": "xor",
    "&&": "land",
    "||": "lor",
}
_UNARY_OPS = {"!": "lnot", "~": "not", "-": "neg"}


def instance_label(path: ScopePath, inst: Inst, trans: Trans = ()) -> str:
    """Identifier-safe name of a scope instance, e.g. `ring_stop_2_bp0`."""
    indices = iter(inst)
    parts = []
    for element in path.elements:
        if element.kind is ElementKind.HIER_REPLICATED:
            parts.append(f"{element.name}_{next(indices)}")
        else:
            parts.append(element.name)
    return "_".join(parts + list(trans))


def instance_display(path: ScopePath, inst: Inst) -> str:
    indices = iter(inst)
    parts = []
    for element in path.elements:
        if element.kind is ElementKind.HIER_REPLICATED:
            parts.append(f"/{element.name}[{next(indices)}]")
        else:
            parts.append(str(element))
    return "".join(parts)


class _NetlistBuilder:
    # pylint: disable=R0902,R0904

    def __init__(
        self,
        graph: ScopeGraph,
        fg: FlowGraph,
        mutations: Sequence[str],
        arb2_priority: str,
    ) -> None:
        self.graph = graph
        self.fg = fg
        self.mutations = tuple(mutations)
        self.arb2_priority = arb2_priority
        self.nodes: List[Node] = []
        self.inputs: List[int] = []
        self.outputs: List[int] = []
        self.registers: List[int] = []
        self.stimulus: List[int] = []
        self.probes: List[Probe] = []
        self.memo: Dict[Hashable, int] = {}
        self.stack: List[Hashable] = []
        self.deferred: Deque[Tuple[int, Callable[[], int]]] = deque()
        self.corrupt = {
            m.split(":", 1)[1]
            for m in mutations
            if m.startswith("corrupt_staging:")
        }
        self.entering: Dict[StagePoint, List[Channel]] = {}
        self.leaving: Dict[StagePoint, List[Channel]] = {}
        for channel in graph.channels.values():
            consumer, producer = channel.consumer.point, channel.producer.point
            self.entering.setdefault(consumer, []).append(channel)
            self.leaving.setdefault(producer, []).append(channel)
        self.sources: Dict[StagePoint, FlowSource] = {
            s.point: s for s in graph.sources
        }
        self.sinks: Dict[StagePoint, FlowSink] = {
            s.point: s for s in graph.sinks
        }
        self.realizers = {
            c.id: _REALIZERS[c.template](self, c)
            for c in graph.components
            if c.template in _REALIZERS
        }

    def realizer(self, channel: Channel) -> "_Realizer":
        return self.realizers[channel.component_id]

    # Node creation

    def _add(self, **kwargs) -> int:
        node = Node(id=len(self.nodes), **kwargs)
        assert node.width >= 1, f"zero-width node {node}"
        self.nodes.append(node)
        return node.id

    def width(self, node_id: int) -> int:
        return self.nodes[node_id].width

    def const(self, value: int, width: int) -> int:
        key = ("const", value & mask(width), width)
        if key not in self.memo:
            self.memo[key] = self._add(
                kind=NodeKind.CONST, width=width, value=value & mask(width)
            )
        return self.memo[key]

    def const_value(self, node_id: int) -> Optional[int]:
        node = self.nodes[node_id]
        return node.value if node.kind is NodeKind.CONST else None

    def input(self, name: str, width: int, source: str = "") -> int:
        key = ("input", name)
        if key not in self.memo:
            self.memo[key] = self._add(
                kind=NodeKind.INPUT, width=width, name=name, source=source
            )
            self.inputs.append(self.memo[key])
        return self.memo[key]

    def output(self, name: str, driver: int, source: str = "") -> int:
        node_id = self._add(
            kind=NodeKind.OUTPUT,
            width=self.width(driver),
            operands=(driver,),
            name=name,
            source=source,
        )
        self.outputs.append(node_id)
        return node_id

    def comb(
        self,
        op: str,
        operands: Sequence[int],
        width: int,
        params: Tuple[int, ...] = (),
        source: str = "",
    ) -> int:
        return self._add(
            kind=NodeKind.COMB,
            width=width,
            op=op,
            operands=tuple(operands),
            params=params,
            source=source,
        )

    def register(
        self,
        key: Hashable,
        width: int,
        source: str,
        group: str,
        data: Callable[[int], int],
        occupancy_stop: Optional[int] = None,
    ) -> int:
        """Memoized register; `data(q)` builds its next value later."""
        if key in self.memo:
            return self.memo[key]
        reg = self._add(
            kind=NodeKind.REGISTER, width=width, source=source, group=group
        )
        self.registers.append(reg)
        self.memo[key] = reg
        self.deferred.append((reg, lambda: data(reg)))
        if occupancy_stop is not None:
            self.probes.append(
                Probe(source, reg, ProbeKind.OCCUPANCY, occupancy_stop)
            )
        return reg

    def memoized(self, key: Hashable, build: Callable[[], int]) -> int:
        if key in self.memo:
            return self.memo[key]
        if key in self.stack:
            cycle = self.stack[self.stack.index(key):]
            raise CombinationalCycleError([_describe_key(k) for k in cycle])
        self.stack.append(key)
        try:
            node = build()
        finally:
            self.stack.pop()
        self.memo[key] = node
        return node

    def finish(self) -> None:
        while self.deferred:
            reg, data = self.deferred.popleft()
            driver = self.resize(data(), self.width(reg))
            self.nodes[reg] = replace(self.nodes[reg], operands=(driver,))

    # Logic helpers with constant folding

    def and_(self, a: int, b: int) -> int:
        for x, y in ((a, b), (b, a)):
            value = self.const_value(x)
            if value == 0:
                return x
            if value == 1:
                return y
        return self.comb("and", (a, b), 1)

    def or_(self, a: int, b: int) -> int:
        for x, y in ((a, b), (b, a)):
            value = self.const_value(x)
            if value == 1:
                return x
            if value == 0:
                return y
        return self.comb("or", (a, b), 1)

    def not_(self, a: int) -> int:
        value = self.const_value(a)
        if value is not None:
            return self.const(1 - value, 1)
        return self.comb("not", (a,), 1)

    def any_of(self, terms: Sequence[int]) -> int:
        result = self.const(0, 1)
        for term in terms:
            result = self.or_(result, term)
        return result

    def mux(self, select: int, if_true: int, if_false: int) -> int:
        value = self.const_value(select)
        if value is not None:
            return if_true if value else if_false
        if if_true == if_false:
            return if_true
        width = max(self.width(if_true), self.width(if_false))
        return self.comb("mux", (select, if_true, if_false), width)

    def resize(self, node_id: int, width: int) -> int:
        if self.width(node_id) == width:
            return node_id
        return self.comb("resize", (node_id,), width)

    def equals(self, node_id: int, value: int, invert: bool = False) -> int:
        width = self.width(node_id)
        if value > mask(width):
            return self.const(int(invert), 1)
        return self.comb(
            "ne" if invert else "eq", (node_id, self.const(value, width)), 1
        )

    def increment(self, node_id: int, step: int = 1) -> int:
        width = self.width(node_id)
        op = "add" if step > 0 else "sub"
        result = self.comb(
            op, (node_id, self.const(1, 1)), width + (1 if step > 0 else 0)
        )
        return self.resize(result, width)

    def to_bit(self, node_id: int) -> int:
        if self.width(node_id) == 1:
            return node_id
        return self.equals(node_id, 0, invert=True)

    # Pipelines and hold groups

    def bounds(self, path: ScopePath) -> Tuple[int, int]:
        node = self.graph.node(path)
        lo, hi = min(node.stages), max(node.stages)
        exit_stage = node.exit_stage if node.exit_stage is not None else hi
        return lo, exit_stage

    def has_flow(self, path: ScopePath) -> bool:
        node = self.graph.node(path)
        return node.entry_stage is not None or node.exit_stage is not None

    def group(self, path: ScopePath) -> HoldGroup:
        return self.graph.group_of(path)

    def group_has_registers(self, group: HoldGroup) -> bool:
        return any(
            self.bounds(p)[1] > self.bounds(p)[0] for p in group.pipelines
        )

    def stall(self, group: HoldGroup, inst: Inst) -> int:
        if group.stall_input is None:
            return self.const(0, 1)
        hier = group.pipelines[0].hier
        return self.input(
            f"{instance_label(hier, inst)}_{group.stall_input}",
            1,
            f"{instance_display(hier, inst)} stall",
        )

    def external_exits(self, group: HoldGroup) -> List[ScopePath]:
        members = set(group.pipelines)
        exits = []
        for path in group.pipelines:
            point = StagePoint(path, self.bounds(path)[1])
            if point in self.sinks or any(
                c.consumer.point.pipeline not in members
                for c in self.leaving.get(point, [])
            ):
                exits.append(path)
        return exits

    def hold(self, group: HoldGroup, inst: Inst) -> int:
        def build() -> int:
            terms = [self.stall(group, inst)]
            for path in self.external_exits(group):
                valid = self.valid(path, self.bounds(path)[1], inst)
                blocked = self.not_(self.exit_ready(path, inst))
                terms.append(self.and_(valid, blocked))
            return self.any_of(terms)

        return self.memoized(("hold", group.name, inst), build)

    def valid(self, path: ScopePath, stage: int, inst: Inst) -> int:
        if not self.has_flow(path):
            return self.const(1, 1)
        lo, _ = self.bounds(path)
        if stage == lo:
            return self.memoized(
                ("entry_valid", path, inst),
                lambda: self.entry_valid(path, inst),
            )
        group = self.group(path)
        display = instance_display(path, inst)
        return self.register(
            ("valid", path, stage, inst),
            1,
            f"{display}@{stage} valid",
            instance_label(path, inst),
            lambda q: self.mux(
                self.hold(group, inst), q, self.valid(path, stage - 1, inst)
            ),
            occupancy_stop=inst[0] if inst else 0,
        )

    def entry_valid(self, path: ScopePath, inst: Inst) -> int:
        point = StagePoint(path, self.bounds(path)[0])
        if point in self.sources:
            return self.input(
                f"{instance_label(path, inst)}_src_valid",
                1,
                f"{instance_display(path, inst)}@{point.stage} source valid",
            )
        channels = self.entering.get(point)
        if channels:
            channel = channels[0]
            return self.realizer(channel).out_valid(channel, inst)
        return self.const(1, 1)

    def exit_valid(self, path: ScopePath, inst: Inst) -> int:
        """Exit valid as seen downstream (gated by the group's stall)."""
        valid = self.valid(path, self.bounds(path)[1], inst)
        return self.and_(valid, self.not_(self.stall(self.group(path), inst)))

    def exit_ready(self, path: ScopePath, inst: Inst) -> int:
        def build() -> int:
            point = StagePoint(path, self.bounds(path)[1])
            if point in self.sinks:
                return self.input(
                    f"{instance_label(path, inst)}_sink_ready",
                    1,
                    f"{instance_display(path, inst)}@{point.stage} sink ready",
                )
            channels = self.leaving.get(point)
            if channels:
                channel = channels[0]
                return self.realizer(channel).in_ready(channel, inst)
            return self.const(1, 1)

        return self.memoized(("exit_ready", path, inst), build)

    def entry_ready(self, path: ScopePath, inst: Inst) -> int:
        def build() -> int:
            group = self.group(path)
            if self.group_has_registers(group):
                return self.not_(self.hold(group, inst))
            return self.and_(
                self.exit_ready(path, inst), self.not_(self.stall(group, inst))
            )

        return self.memoized(("entry_ready", path, inst), build)

    # Fields

    def field(self, point: FlowPoint, name: str, inst: Inst) -> int:
        return self.memoized(
            ("field", point, name, inst),
            lambda: self._build_field(point, name, inst),
        )

    def _build_field(self, point: FlowPoint, name: str, inst: Inst) -> int:
        production = self.fg.productions.get((point, name))
        if production is not None:
            return self.production(production, inst)
        preds = self.fg.inflow.get((point, name))
        assert preds, f"${name} is not routed to {point}"
        if point in self.fg.expressions:
            expression = self.fg.expressions[point]
            return self.resize(
                self.lower(expression.placed.statement.rhs, point, inst, name),
                self.fg.width(name),
            )
        upstream, key = preds[0]
        if key == "stage":
            return self.staging_register(upstream, point, name, inst)
        channel = self.graph.channels[int(key[2:])]
        return self.realizer(channel).out_field(channel, name, inst)

    def staging_register(
        self, upstream: FlowPoint, point: FlowPoint, name: str, inst: Inst
    ) -> int:
        width = self.fg.width(name)
        path = point.pipeline
        trans = "".join(f"/{t}" for t in point.trans)
        source = (
            f"{instance_display(path, inst)}@{upstream.stage}->@{point.stage}"
            f"{trans} ${name}"
        )

        def data(q: int) -> int:
            value = self.field(upstream, name, inst)
            if self.has_flow(path):
                value = self.mux(self.hold(self.group(path), inst), q, value)
            if name in self.corrupt:
                self.corrupt.discard(name)
                logging.warning("Mutation: corrupting bit 0 of %s.", source)
                value = self.comb(
                    "and", (value, self.const(mask(width) - 1, width)), width
                )
            return value

        return self.register(
            ("stage_reg", point, name, inst),
            width,
            source,
            instance_label(path, inst),
            data,
        )

    def production(self, production: Production, inst: Inst) -> int:
        point = production.point
        if production.kind is ProductionKind.LOGIC:
            statement = production.placed.statement
            return self.resize(
                self.lower(statement.rhs, point, inst), production.width
            )
        if production.kind is ProductionKind.DEFAULT:
            return self.const(0, production.width)
        path = point.pipeline
        display = (
            f"{instance_display(path, inst)}@{point.stage} ${production.name}"
        )
        if point.stage_point in self.sources:
            return self.input(
                f"{instance_label(path, inst)}_src_{production.name}",
                production.width,
                display,
            )
        node = self.input(
            f"{instance_label(path, inst, point.trans)}_{production.name}",
            production.width,
            display,
        )
        if node not in self.stimulus:
            self.stimulus.append(node)
        return node

    def lower(
        self,
        expr: Expression,
        point: FlowPoint,
        inst: Inst,
        any_name: Optional[str] = None,
    ) -> int:
        """Build the logic of an expression evaluated at `point`."""
        source = f"{instance_display(point.pipeline, inst)}@{point.stage}"
        if isinstance(expr, SignalRef):
            trans = point.trans + expr.scope
            at = FlowPoint(point.pipeline, point.stage, trans)
            name = any_name if expr.is_any else expr.name
            value = self.field(at, name, inst)
            if expr.select is None:
                return value
            hi, lo = expr.select
            if lo == 0 and hi == self.width(value) - 1:
                return value
            return self.comb("slice", (value,), hi - lo + 1, (hi, lo), source)
        if isinstance(expr, IndexRef):
            replicated = point.pipeline.replicated
            for position in range(len(replicated) - 1, -1, -1):
                if replicated[position].name == expr.name:
                    count = self.graph.replication[expr.name]
                    return self.const(inst[position], clog2(count))
            raise AssertionError(f"unbound index #{expr.name}")
        if isinstance(expr, IntLiteral):
            return self.const(expr.value, literal_width(expr.value))
        if isinstance(expr, UnaryOp):
            operand = self.lower(expr.operand, point, inst, any_name)
            op = _UNARY_OPS[expr.op]
            width = operator_width(
                "neg" if expr.op == "-" else expr.op, [self.width(operand)]
            )
            return self.comb(op, (operand,), width, source=source)
        if isinstance(expr, BinaryOp):
            left = self.lower(expr.left, point, inst, any_name)
            if expr.op == "**":
                exponent = constant_exponent(expr)
                width = operator_width("**", [self.width(left)], exponent)
                return self.comb(
                    "pow", (left,), width, (exponent,), source=source
                )
            right = self.lower(expr.right, point, inst, any_name)
            width = operator_width(
                expr.op, [self.width(left), self.width(right)]
            )
            return self.comb(
                _BINARY_OPS[expr.op], (left, right), width, source=source
            )
        if isinstance(expr, Ternary):
            select = self.to_bit(self.lower(expr.cond, point, inst))
            return self.mux(
                select,
                self.lower(expr.if_true, point, inst, any_name),
                self.lower(expr.if_false, point, inst, any_name),
            )
        assert isinstance(expr, Call)
        operand = self.lower(expr.args[0], point, inst, any_name)
        width = operator_width(expr.name, [self.width(operand)])
        return self.comb(expr.name, (operand,), width, source=source)

    # Roots

    def build(self) -> None:
        self._build_ports()
        for name, record in sorted(self.fg.fields.items()):
            if record.consumers:
                continue
            for point in record.producers:
                production = self.fg.productions[(point, name)]
                if production.kind is not ProductionKind.LOGIC:
                    continue
                path = point.pipeline
                for inst in self.graph.instances(path):
                    label = instance_label(path, inst, point.trans)
                    display = instance_display(path, inst)
                    self.output(
                        f"{label}_{name}",
                        self.field(point, name, inst),
                        f"{display}@{point.stage} ${name}",
                    )
        for realizer in self.realizers.values():
            realizer.finalize()
        self.finish()

    def _build_ports(self) -> None:
        self.ports: List[PortBinding] = []
        by_component: Dict[int, Tuple[FlowSource, FlowSink]] = {}
        for source in self.graph.sources:
            sink = next(
                s
                for s in self.graph.sinks
                if s.component_id == source.component_id
            )
            by_component[source.component_id] = (source, sink)
        for source, sink in by_component.values():
            src_path, sink_path = source.point.pipeline, sink.point.pipeline
            src_point = FlowPoint(src_path, source.point.stage, source.trans)
            sink_point = FlowPoint(sink_path, sink.point.stage, sink.trans)
            src_names = sorted(
                name
                for (point, name) in self.fg.productions
                if point == src_point
            )
            sink_names = sorted(
                d.name for d in self.fg.demands if d.point == sink_point
            )
            for inst in self.graph.instances(src_path):
                label = instance_label(src_path, inst)
                valid = self.input(f"{label}_src_valid", 1)
                fields = tuple(
                    (name, self.field(src_point, name, inst))
                    for name in src_names
                )
                ready = self.output(
                    f"{label}_src_ready", self.entry_ready(src_path, inst)
                )
                sink_label = instance_label(sink_path, inst)
                sink_ready = self.input(f"{sink_label}_sink_ready", 1)
                sink_valid = self.output(
                    f"{sink_label}_sink_valid",
                    self.exit_valid(sink_path, inst),
                )
                outs = tuple(
                    (
                        name,
                        self.output(
                            f"{sink_label}_sink_{name}",
                            self.field(sink_point, name, inst),
                        ),
                    )
                    for name in sink_names
                )
                self.ports.append(
                    PortBinding(
                        inst[0] if inst else 0,
                        valid,
                        ready,
                        fields,
                        sink_valid,
                        sink_ready,
                        outs,
                    )
                )


def _describe_key(key: Hashable) -> str:
    if isinstance(key, tuple):
        return " ".join(str(part) for part in key)
    return str(key)


# Component realizations


class _Realizer:
    """Handshake and storage hardware behind one component's channels."""

    def __init__(self, builder: _NetlistBuilder, component: ComponentInstance):
        self.b = builder
        self.component = component

    def key(self, *parts) -> Tuple:
        return (self.component.template, self.component.id) + parts

    def producer_point(self, channel: Channel) -> FlowPoint:
        end = channel.producer
        return FlowPoint(end.point.pipeline, end.point.stage, end.trans)

    def out_valid(self, channel: Channel, inst: Inst) -> int:
        raise NotImplementedError

    def out_field(self, channel: Channel, name: str, inst: Inst) -> int:
        raise NotImplementedError

    def in_ready(self, channel: Channel, inst: Inst) -> int:
        raise NotImplementedError

    def finalize(self) -> None:
        """Build anything that must exist even if nothing asked for it."""


class _DirectHops(_Realizer):
    """Hop-to-hop channels of stall and back-pressured pipelines."""

    def out_valid(self, channel, inst):
        return self.b.exit_valid(channel.producer.point.pipeline, inst)

    def out_field(self, channel, name, inst):
        return self.b.field(self.producer_point(channel), name, inst)

    def in_ready(self, channel, inst):
        return self.b.entry_ready(channel.consumer.point.pipeline, inst)


class _BypassFifo(_Realizer):
    def __init__(self, builder, component):
        super().__init__(builder, component)
        self.depth = component.params["depth"]
        self.channel = builder.graph.channels[component.params["channel"]]
        self.pointer_width = clog2(self.depth)
        self.count_width = clog2(self.depth + 1)
        self.upstream = self.channel.producer.point.pipeline
        self.downstream = self.channel.consumer.point.pipeline

    def label(self, inst):
        hier = self.downstream.hier
        return f"{instance_display(hier, inst)} fifo{self.component.id}"

    def group(self, inst):
        hier = self.downstream.hier
        return f"{instance_label(hier, inst)}_fifo{self.component.id}"

    def in_valid(self, inst):
        return self.b.exit_valid(self.upstream, inst)

    def out_ready(self, inst):
        return self.b.entry_ready(self.downstream, inst)

    def incoming(self, name, inst):
        return self.b.field(self.producer_point(self.channel), name, inst)

    def count(self, inst):
        def data(q):
            push, pop = self.push_mem(inst), self.pop_mem(inst)
            return self.b.mux(
                self.b.and_(push, self.b.not_(pop)),
                self.b.increment(q),
                self.b.mux(
                    self.b.and_(pop, self.b.not_(push)),
                    self.b.increment(q, -1),
                    q,
                ),
            )

        return self.b.register(
            self.key("count", inst),
            self.count_width,
            f"{self.label(inst)} count",
            self.group(inst),
            data,
            occupancy_stop=inst[0] if inst else 0,
        )

    def pointer(self, role, inst):
        def data(q):
            if role == "wr":
                advance = self.push_mem(inst)
            else:
                advance = self.pop_mem(inst)
            wrapped = self.b.mux(
                self.b.equals(q, self.depth - 1),
                self.b.const(0, self.pointer_width),
                self.b.increment(q),
            )
            return self.b.mux(advance, wrapped, q)

        return self.b.register(
            self.key(role, inst),
            self.pointer_width,
            f"{self.label(inst)} {role}",
            self.group(inst),
            data,
        )

    def empty(self, inst):
        return self.b.memoized(
            self.key("empty", inst), lambda: self.b.equals(self.count(inst), 0)
        )

    def full(self, inst):
        return self.b.memoized(
            self.key("full", inst),
            lambda: self.b.equals(self.count(inst), self.depth),
        )

    def push_mem(self, inst):
        def build():
            push = self.b.and_(
                self.in_valid(inst), self.in_ready(self.channel, inst)
            )
            bypass = self.b.and_(self.empty(inst), self.out_ready(inst))
            return self.b.and_(push, self.b.not_(bypass))

        return self.b.memoized(self.key("push_mem", inst), build)

    def pop_mem(self, inst):
        def build():
            stored = self.b.not_(self.empty(inst))
            return self.b.and_(stored, self.out_ready(inst))

        return self.b.memoized(self.key("pop_mem", inst), build)

    def entry(self, slot, name, inst):
        width = self.b.fg.width(name)

        def data(q):
            selected = self.b.equals(self.pointer("wr", inst), slot)
            write = self.b.and_(self.push_mem(inst), selected)
            return self.b.mux(write, self.incoming(name, inst), q)

        return self.b.register(
            self.key("entry", slot, name, inst),
            width,
            f"{self.label(inst)}[{slot}] ${name}",
            self.group(inst),
            data,
        )

    def out_valid(self, channel, inst):
        def build():
            stored = self.b.not_(self.empty(inst))
            return self.b.or_(stored, self.in_valid(inst))

        return self.b.memoized(self.key("out_valid", inst), build)

    def in_ready(self, channel, inst):
        def build():
            room = self.b.not_(self.full(inst))
            return self.b.or_(room, self.out_ready(inst))

        return self.b.memoized(self.key("in_ready", inst), build)

    def out_field(self, channel, name, inst):
        def build():
            read = self.entry(0, name, inst)
            rd = self.pointer("rd", inst)
            for slot in range(1, self.depth):
                read = self.b.mux(
                    self.b.equals(rd, slot), self.entry(slot, name, inst), read
                )
            incoming = self.incoming(name, inst)
            return self.b.mux(self.empty(inst), incoming, read)

        return self.b.memoized(self.key("out_field", name, inst), build)


class _Arbiter(_Realizer):
    def __init__(self, builder, component):
        super().__init__(builder, component)
        in1 = builder.graph.channels[component.params["in1"]]
        in2 = builder.graph.channels[component.params["in2"]]
        swap = (builder.arb2_priority == "in2") != (
            "swap_arb2_priority" in builder.mutations
        )
        self.high, self.low = (in2, in1) if swap else (in1, in2)

    def valid_of(self, channel, inst):
        return self.b.exit_valid(channel.producer.point.pipeline, inst)

    def out_valid(self, channel, inst):
        return self.b.memoized(
            self.key("out_valid", inst),
            lambda: self.b.or_(
                self.valid_of(self.high, inst), self.valid_of(self.low, inst)
            ),
        )

    def out_field(self, channel, name, inst):
        return self.b.memoized(
            self.key("out_field", name, inst),
            lambda: self.b.mux(
                self.valid_of(self.high, inst),
                self.b.field(self.producer_point(self.high), name, inst),
                self.b.field(self.producer_point(self.low), name, inst),
            ),
        )

    def in_ready(self, channel, inst):
        out_ready = self.b.entry_ready(channel.consumer.point.pipeline, inst)
        if channel.id == self.high.id:
            return out_ready
        return self.b.memoized(
            self.key("low_ready", inst),
            lambda: self.b.and_(
                out_ready, self.b.not_(self.valid_of(self.high, inst))
            ),
        )


class _OpportunisticFlow(_Realizer):
    def __init__(self, builder, component):
        super().__init__(builder, component)
        params = component.params
        self.taken = builder.graph.channels[params["taken"]]
        self.main = builder.graph.channels[params["main"]]
        self.condition = params["condition"]
        self.inverted = params["inverted"]

    def in_valid(self, inst):
        return self.b.exit_valid(self.taken.producer.point.pipeline, inst)

    def cond(self, inst):
        def build():
            point = self.taken.producer.point
            at = FlowPoint(point.pipeline, point.stage, ())
            value = self.b.to_bit(self.b.field(at, self.condition, inst))
            return self.b.not_(value) if self.inverted else value

        return self.b.memoized(self.key("cond", inst), build)

    def ready_of(self, channel, inst):
        return self.b.entry_ready(channel.consumer.point.pipeline, inst)

    def take(self, inst):
        def build():
            room = self.ready_of(self.taken, inst)
            return self.b.and_(self.cond(inst), room)

        return self.b.memoized(self.key("take", inst), build)

    def out_valid(self, channel, inst):
        take = self.take(inst)
        steer = take if channel.id == self.taken.id else self.b.not_(take)
        return self.b.memoized(
            self.key("out_valid", channel.id, inst),
            lambda: self.b.and_(self.in_valid(inst), steer),
        )

    def out_field(self, channel, name, inst):
        return self.b.field(self.producer_point(channel), name, inst)

    def in_ready(self, channel, inst):
        def build():
            room = self.ready_of(self.main, inst)
            return self.b.or_(self.take(inst), room)

        return self.b.memoized(self.key("in_ready", inst), build)

    def finalize(self):
        path = self.taken.producer.point.pipeline
        for inst in self.b.graph.instances(path):
            stop = inst[0] if inst else 0
            valid = self.in_valid(inst)
            taken = self.b.and_(valid, self.take(inst))
            forced = self.b.and_(
                self.b.and_(valid, self.cond(inst)),
                self.b.and_(
                    self.b.not_(self.ready_of(self.taken, inst)),
                    self.ready_of(self.main, inst),
                ),
            )
            display = instance_display(path.hier, inst)
            self.b.probes.append(
                Probe(
                    f"{display} bypass taken",
                    taken,
                    ProbeKind.BYPASS_TAKEN,
                    stop,
                )
            )
            self.b.probes.append(
                Probe(
                    f"{display} forced onto ring",
                    forced,
                    ProbeKind.FORCED_ONTO_RING,
                    stop,
                )
            )


class _Ring(_Realizer):
    """Ring of one-slot hops with a one-entry ejection buffer per stop.

    Slot `j` is the hop register arriving at stop `j`. Through-traffic has
    priority over injection. An ejection that finds its stop's buffer full
    and not draining holds the whole ring for that cycle.
    """

    def __init__(self, builder, component):
        super().__init__(builder, component)
        self.channel = builder.graph.channels[component.params["channel"]]
        self.ports = component.params["ports"]
        self.inject_path = self.channel.producer.point.pipeline
        self.eject_path = self.channel.consumer.point.pipeline
        self.fields = builder.fg.channel_fields.get(self.channel.id, ())
        if "dest" not in builder.fg.fields:
            raise StagingError(
                "simple_ring needs a $dest field at its injection point",
                component.line,
                component.column,
            )
        if builder.fg.width("dest") < clog2(self.ports):
            raise StagingError(
                f"$dest is {builder.fg.width('dest')} bits wide; a ring of "
                f"{self.ports} stops needs at least {clog2(self.ports)}",
                component.line,
                component.column,
            )
        self.invert = "invert_dest_compare" in builder.mutations

    def label(self, stop):
        return f"{instance_display(self.inject_path.hier, (stop,))} ring"

    def group(self):
        return f"ring{self.component.id}"

    def inject_field(self, stop, name):
        return self.b.field(self.producer_point(self.channel), name, (stop,))

    def slot_valid(self, stop):
        def data(q):
            prev = (stop - 1) % self.ports
            moving = self.b.or_(self.through(prev), self.inject_fire(prev))
            staying = self.b.and_(q, self.b.not_(self.eject(stop)))
            return self.b.mux(self.ring_stall(), staying, moving)

        return self.b.register(
            self.key("slot_valid", stop),
            1,
            f"{self.label(stop)} slot valid",
            self.group(),
            data,
            occupancy_stop=stop,
        )

    def slot_field(self, stop, name):
        def data(q):
            prev = (stop - 1) % self.ports
            moving = self.b.mux(
                self.through(prev),
                self.slot_field(prev, name),
                self.inject_field(prev, name),
            )
            return self.b.mux(self.ring_stall(), q, moving)

        return self.b.register(
            self.key("slot", stop, name),
            self.b.fg.width(name),
            f"{self.label(stop)} slot ${name}",
            self.group(),
            data,
        )

    def skid_valid(self, stop):
        def data(q):
            keep = self.b.and_(q, self.b.not_(self.skid_pop(stop)))
            return self.b.or_(self.eject(stop), keep)

        return self.b.register(
            self.key("skid_valid", stop),
            1,
            f"{self.label(stop)} eject buffer valid",
            self.group(),
            data,
            occupancy_stop=stop,
        )

    def skid_field(self, stop, name):
        return self.b.register(
            self.key("skid", stop, name),
            self.b.fg.width(name),
            f"{self.label(stop)} eject buffer ${name}",
            self.group(),
            lambda q: self.b.mux(
                self.eject(stop), self.slot_field(stop, name), q
            ),
        )

    def eject_want(self, stop):
        return self.b.memoized(
            self.key("eject_want", stop),
            lambda: self.b.and_(
                self.slot_valid(stop),
                self.b.equals(
                    self.slot_field(stop, "dest"), stop, self.invert
                ),
            ),
        )

    def skid_pop(self, stop):
        return self.b.memoized(
            self.key("skid_pop", stop),
            lambda: self.b.and_(
                self.skid_valid(stop),
                self.b.entry_ready(self.eject_path, (stop,)),
            ),
        )

    def skid_free(self, stop):
        return self.b.memoized(
            self.key("skid_free", stop),
            lambda: self.b.or_(
                self.b.not_(self.skid_valid(stop)), self.skid_pop(stop)
            ),
        )

    def ring_stall(self):
        return self.b.memoized(
            self.key("stall"),
            lambda: self.b.any_of(
                [
                    self.b.and_(
                        self.eject_want(s), self.b.not_(self.skid_free(s))
                    )
                    for s in range(self.ports)
                ]
            ),
        )

    def eject(self, stop):
        return self.b.memoized(
            self.key("eject", stop),
            lambda: self.b.and_(self.eject_want(stop), self.skid_free(stop)),
        )

    def through(self, stop):
        return self.b.memoized(
            self.key("through", stop),
            lambda: self.b.and_(
                self.slot_valid(stop), self.b.not_(self.eject_want(stop))
            ),
        )

    def inject_fire(self, stop):
        return self.b.memoized(
            self.key("inject_fire", stop),
            lambda: self.b.and_(
                self.b.exit_valid(self.inject_path, (stop,)),
                self.in_ready(self.channel, (stop,)),
            ),
        )

    def out_valid(self, channel, inst):
        return self.skid_valid(inst[0])

    def out_field(self, channel, name, inst):
        return self.skid_field(inst[0], name)

    def in_ready(self, channel, inst):
        stop = inst[0]
        return self.b.memoized(
            self.key("in_ready", stop),
            lambda: self.b.and_(
                self.b.not_(self.ring_stall()), self.b.not_(self.through(stop))
            ),
        )

    def finalize(self):
        for stop in range(self.ports):
            self.slot_valid(stop)
            self.skid_valid(stop)


_REALIZERS = {
    "stall_pipeline": _DirectHops,
    "bp_pipeline": _DirectHops,
    "simple_bypass_fifo": _BypassFifo,
    "arb2": _Arbiter,
    "opportunistic_flow": _OpportunisticFlow,
    "simple_ring": _Ring,
}


def build_netlist(
    graph: ScopeGraph,
    fg: FlowGraph,
    plan: StagePlan,
    mutations: Sequence[str] = CONFIG["mutations"],
    arb2_priority: str = CONFIG["arb2_priority"],
) -> Netlist:
    """Flatten a resolved design into registers and combinational nodes.

    :param graph: resolved ScopeGraph.
    :param fg: FlowGraph after `resolve_fields`.
    :param plan: StagePlan from `plan_stages` (must be legal).
    :param mutations: fault-injection hooks, see `config.CONFIG`.
    :param arb2_priority: "in1" or "in2", the arb2 input that wins ties.
    :return: acyclic Netlist with its evaluation schedule.
    :raise StagingError: when the flow cannot be realized.
    :raise CombinationalCycleError: on register-free feedback.
    """
    assert plan is not None
    unknown = [
        m
        for m in mutations
        if m not in ("invert_dest_compare", "swap_arb2_priority")
        and not m.startswith("corrupt_staging:")
    ]
    if unknown:
        raise StagingError(f"unknown mutation(s): {', '.join(unknown)}")
    builder = _NetlistBuilder(graph, fg, mutations, arb2_priority)
    builder.build()
    netlist = Netlist(
        nodes=tuple(builder.nodes),
        inputs=tuple(builder.inputs),
        outputs=tuple(builder.outputs),
        registers=tuple(builder.registers),
        probes=tuple(builder.probes),
        ports=tuple(builder.ports),
        stimulus=tuple(builder.stimulus),
    )
    netlist = replace(netlist, schedule=tuple(check_acyclic(netlist)))
    logging.info(
        "Built netlist: %d nodes, %d registers, %d inputs, %d outputs.",
        len(netlist.nodes),
        len(netlist.registers),
        len(netlist.inputs),
        len(netlist.outputs),
    )
    return netlist


def _shortest_cycle(comb: nx.DiGraph, cycle_nodes: Sequence[int]) -> List[int]:
    best: List[int] = list(cycle_nodes)
    for node in cycle_nodes:
        for successor in comb.successors(node):
            try:
                path = nx.shortest_path(comb, successor, node)
            except nx.NetworkXNoPath:
                continue
            if len(path) < len(best):
                best = path
    return best


def check_acyclic(netlist: Netlist) -> List[int]:
    """Topologically order the combinational nodes and outputs.

    :return: node ids of COMB and OUTPUT nodes in evaluation order.
    :raise CombinationalCycleError: listing a shortest cycle found.
    """
    comb = nx.DiGraph()
    evaluated = [
        node
        for node in netlist.nodes
        if node.kind in (NodeKind.COMB, NodeKind.OUTPUT)
    ]
    comb.add_nodes_from(node.id for node in evaluated)
    for node in evaluated:
        for operand in node.operands:
            if netlist.nodes[operand].kind in (NodeKind.COMB, NodeKind.OUTPUT):
                comb.add_edge(operand, node.id)
    try:
        order = list(nx.lexicographical_topological_sort(comb))
    except nx.NetworkXUnfeasible as exc:
        found = [u for u, _ in nx.find_cycle(comb)]
        cycle = _shortest_cycle(comb, found)
        raise CombinationalCycleError(
            [netlist.describe(node_id) for node_id in cycle]
        ) from exc
    return order


def dump_netlist(netlist: Netlist) -> str:
    """One node per line: `id kind width operands source-ref`."""
    lines = []
    for node in netlist.nodes:
        kind = node.kind.value
        if node.kind is NodeKind.COMB:
            kind = f"comb:{node.op}"
            if node.params:
                kind += "(" + ",".join(str(p) for p in node.params) + ")"
        elif node.kind is NodeKind.CONST:
            kind = f"const:{node.value}"
        operands = ",".join(str(o) for o in node.operands) or "-"
        ref = node.name or node.source or "-"
        lines.append(f"{node.id} {kind} {node.width} {operands} {ref}")
    return "\n".join(lines) + ("\n" if lines else "")
