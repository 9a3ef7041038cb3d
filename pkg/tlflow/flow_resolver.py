"""Flow graph construction and demand-driven `$ANY` field resolution.

Flow points are abstract: a point inside `/ring_stop[*]` stands for that
point in every stop. A consumed field is pulled upstream from its consumer
until a producer is found; every edge crossed carries the field. Fields
nobody consumes downstream are never carried, so transactions change shape
along the flow.
"""

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import networkx as nx

from tlflow.config import CONFIG
from tlflow.exceptions import (
    FieldWidthError,
    FlowError,
    MultiplyDrivenFieldError,
    UnresolvedFieldError,
)
from tlflow.frontend import Expression, SignalRef, Ternary, iter_refs
from tlflow.scope_graph import (
    BindingKind,
    PlacedAssign,
    ScopeGraph,
    ScopePath,
    StagePoint,
    Trans,
    known_scopes,
)
from tlflow.utils import clog2, expression_width


@dataclass(frozen=True)
class FlowPoint:
    pipeline: ScopePath
    stage: int
    trans: Trans = ()

    @property
    def stage_point(self) -> StagePoint:
        return StagePoint(self.pipeline, self.stage)

    @classmethod
    def of(cls, point: StagePoint, trans: Trans = ()) -> "FlowPoint":
        return cls(point.pipeline, point.stage, trans)

    def at(self, stage: int) -> "FlowPoint":
        return FlowPoint(self.pipeline, stage, self.trans)

    def __str__(self) -> str:
        trans = "".join(f"/{t}" for t in self.trans)
        return f"{self.pipeline}@{self.stage}{trans}"


class EdgeKind(enum.Enum):
    STAGE = "stage"
    CHANNEL = "channel"
    EXPRESSION = "expression"


class ProductionKind(enum.Enum):
    LOGIC = "logic"
    SOURCE = "source"
    STIMULUS = "stimulus"
    DEFAULT = "default"


@dataclass
class Production:
    point: FlowPoint
    name: str
    width: int
    kind: ProductionKind
    placed: Optional[PlacedAssign] = None


@dataclass
class Demand:
    point: FlowPoint
    name: str
    select: Optional[Tuple[int, int]] = None
    line: int = 0
    column: int = 0


@dataclass
class FlowExpression:
    """A `$ANY` assignment: its target point and one input point per arm."""

    id: int
    point: FlowPoint
    placed: PlacedAssign
    arms: Tuple[FlowPoint, ...]


@dataclass(frozen=True)
class Field:
    name: str
    width: int
    producers: Tuple[FlowPoint, ...]
    consumers: Tuple[FlowPoint, ...]
    route: FrozenSet[Tuple[FlowPoint, FlowPoint, str]]


Inflow = Tuple[Tuple[FlowPoint, str], ...]


@dataclass
class FlowGraph:
    graph: nx.MultiDiGraph = field(default_factory=nx.MultiDiGraph)
    expressions: Dict[FlowPoint, FlowExpression] = field(default_factory=dict)
    productions: Dict[Tuple[FlowPoint, str], Production] = field(
        default_factory=dict
    )
    demands: List[Demand] = field(default_factory=list)
    fields: Dict[str, Field] = field(default_factory=dict)
    inflow: Dict[Tuple[FlowPoint, str], Inflow] = field(default_factory=dict)
    point_fields: Dict[FlowPoint, Dict[str, int]] = field(default_factory=dict)
    channel_fields: Dict[int, Tuple[str, ...]] = field(default_factory=dict)
    retrograde: List[Demand] = field(default_factory=list)
    resolved: bool = False

    def width(self, name: str) -> int:
        return self.fields[name].width

    def carried(self, point: FlowPoint, name: str) -> bool:
        return name in self.point_fields.get(point, {})


def _any_arms(placed: PlacedAssign) -> List[SignalRef]:
    """Validate a statement's use of `$ANY`; return the arms of an `$ANY` LHS.

    An empty list means the LHS is a named field.
    """
    statement = placed.statement
    where = (statement.line, statement.column)
    if not statement.lhs.is_any:
        for ref in iter_refs(statement.rhs):
            if isinstance(ref, SignalRef) and ref.is_any:
                raise FlowError(
                    f"${statement.lhs.name} reads /{'/'.join(ref.scope)}$ANY; "
                    f"$ANY may only be transferred unaltered to $ANY",
                    *where,
                )
        return []

    def arms(expr: Expression) -> List[SignalRef]:
        if isinstance(expr, SignalRef) and expr.is_any:
            if not expr.scope or expr.select is not None:
                raise FlowError(
                    "a $ANY arm must name a child scope without a "
                    "bit-select, as in /in$ANY",
                    *where,
                )
            return [expr]
        if isinstance(expr, Ternary):
            for ref in iter_refs(expr.cond):
                if isinstance(ref, SignalRef) and ref.is_any:
                    raise FlowError(
                        "$ANY cannot steer a flow expression", *where
                    )
            return arms(expr.if_true) + arms(expr.if_false)
        raise FlowError(
            "flow expression alters the $ANY payload; $ANY must be the "
            "sole right-hand side or a full arm of a ternary",
            *where,
        )

    return arms(statement.rhs)


def build_flow_graph(graph: ScopeGraph) -> FlowGraph:
    """Build the flow graph of a resolved ScopeGraph.

    Nodes are flow points (pipeline stage plus transaction scope). Edges are
    stage progressions inside a pipeline, one edge per component channel and
    one edge per `$ANY` arm of a flow expression.

    :param graph: output of `scope_graph.resolve_references`.
    :return: FlowGraph without field information.
    :raise FlowError: on illegal `$ANY` use or a flow cycle that no ring
    hop breaks.
    """
    assert graph.resolved
    fg = FlowGraph()
    flow = fg.graph
    counter = itertools.count()
    for path, node in graph.pipelines():
        if not node.stages:
            continue
        lo, hi = min(node.stages), max(node.stages)
        for trans in known_scopes(node):
            for stage in range(lo, hi + 1):
                flow.add_node(FlowPoint(path, stage, trans))
            for stage in range(lo, hi):
                flow.add_edge(
                    FlowPoint(path, stage, trans),
                    FlowPoint(path, stage + 1, trans),
                    key="stage",
                    kind=EdgeKind.STAGE,
                    sequential=True,
                )
        for stage in sorted(node.stages):
            for placed in node.stages[stage].statements:
                arms = _any_arms(placed)
                if not arms:
                    continue
                target = FlowPoint(path, stage, placed.trans)
                expression = FlowExpression(
                    next(counter),
                    target,
                    placed,
                    tuple(
                        FlowPoint(path, stage, placed.trans + arm.scope)
                        for arm in arms
                    ),
                )
                fg.expressions[target] = expression
                for position, arm in enumerate(expression.arms):
                    flow.add_edge(
                        arm,
                        target,
                        key=f"expr{expression.id}.{position}",
                        kind=EdgeKind.EXPRESSION,
                        sequential=False,
                    )
    for channel in graph.channels.values():
        producer, consumer = channel.producer, channel.consumer
        flow.add_edge(
            FlowPoint.of(producer.point, producer.trans),
            FlowPoint.of(consumer.point, consumer.trans),
            key=f"ch{channel.id}",
            kind=EdgeKind.CHANNEL,
            handshake=channel.handshake,
            sequential=channel.handshake.value == "ring-hop",
        )
    combinational = nx.MultiDiGraph(
        [
            (u, v, k, {})
            for u, v, k, sequential in flow.edges(keys=True, data="sequential")
            if not sequential
        ]
    )
    try:
        cycle = nx.find_cycle(combinational)
    except nx.NetworkXNoCycle:
        cycle = []
    if cycle:
        raise FlowError(
            "flow cycle without a register: "
            + " -> ".join(str(edge[0]) for edge in cycle)
        )
    logging.info(
        "Built flow graph: %d points, %d edges, %d flow expressions.",
        flow.number_of_nodes(),
        flow.number_of_edges(),
        len(fg.expressions),
    )
    return fg


def _check_payload_name(
    placed: PlacedAssign, handshake_names: Sequence[str]
) -> None:
    lhs = placed.statement.lhs
    if placed.trans and lhs.name in handshake_names:
        raise FlowError(
            f"${lhs.name} is a flow-control signal and cannot be carried "
            f"by /{'/'.join(placed.trans)}",
            lhs.line,
            lhs.column,
        )


def _collect(
    graph: ScopeGraph, fg: FlowGraph, handshake_names: Sequence[str]
) -> Tuple[
    Dict[Tuple[FlowPoint, str], Production], List[Demand], List[Demand]
]:
    productions: Dict[Tuple[FlowPoint, str], Production] = {}
    demands: List[Demand] = []
    retrograde: List[Demand] = []
    late = {
        (b.point, b.trans, b.name)
        for b in graph.bindings
        if b.kind is BindingKind.RETROGRADE
    }

    def produce(production: Production) -> None:
        key = (production.point, production.name)
        if key in productions:
            raise MultiplyDrivenFieldError(
                production.name, str(production.point), str(production.point)
            )
        productions[key] = production

    for path, node in graph.pipelines():
        for stage in sorted(node.stages):
            for placed in node.stages[stage].statements:
                statement = placed.statement
                point = FlowPoint(path, stage, placed.trans)
                if not statement.lhs.is_any:
                    _check_payload_name(placed, handshake_names)
                    produce(
                        Production(
                            point,
                            statement.lhs.name,
                            0,
                            ProductionKind.LOGIC,
                            placed,
                        )
                    )
                for ref in iter_refs(statement.rhs):
                    if not isinstance(ref, SignalRef) or ref.is_any:
                        continue
                    demand = Demand(
                        FlowPoint(path, stage, placed.trans + ref.scope),
                        ref.name,
                        ref.select,
                        ref.line,
                        ref.column,
                    )
                    trans = demand.point.trans
                    key = (StagePoint(path, stage), trans, ref.name)
                    (retrograde if key in late else demands).append(demand)
    for source in graph.sources:
        point = FlowPoint.of(source.point, source.trans)
        for name, width in sorted(source.produces.items()):
            produce(Production(point, name, width, ProductionKind.SOURCE))
    for use in graph.uses:
        demands.append(Demand(FlowPoint.of(use.point, use.trans), use.name))
    for sink in graph.sinks:
        point = FlowPoint(sink.point.pipeline, sink.point.stage, sink.trans)
        names = {"tag"} | {
            p.name
            for p in productions.values()
            if p.kind is ProductionKind.LOGIC and p.point.trans == sink.trans
        }
        demands.extend(Demand(point, name) for name in sorted(names))
    return productions, demands, retrograde


def resolve_fields(
    fg: FlowGraph,
    graph: ScopeGraph,
    field_defaults: Sequence[str] = CONFIG["field_defaults"],
    handshake_names: Sequence[str] = CONFIG["handshake_names"],
) -> FlowGraph:
    """Route every consumed field from its producer to its consumers.

    Each demand is pulled upstream over the flow graph. A point that is the
    target of a flow expression receives its non-local fields only through
    the expression's arms, and a multiplexer demands the field from all of
    them. A pull that dead-ends at a design source becomes a stimulus field
    there if the field is consumed with an explicit bit-select and nothing
    in the design produces it, or a constant 0 if it is listed in
    `field_defaults`.

    :param fg: output of `build_flow_graph`.
    :param graph: the resolved ScopeGraph `fg` was built from.
    :param field_defaults: fields fed 0 where no producer is found.
    :param handshake_names: flow-control names no transaction may carry.
    :return: FlowGraph with fields, routes and per-point field sets.
    :raise UnresolvedFieldError: when an upstream path has no producer.
    :raise MultiplyDrivenFieldError: when one producer feeds another.
    :raise FieldWidthError: when a bit-select exceeds a field's width.
    :raise FlowError: when a transaction assigns a flow-control name.
    """
    productions, demands, retrograde = _collect(graph, fg, handshake_names)
    produced_names = {name for _, name in productions}
    selected: Dict[str, int] = {}
    for demand in demands + retrograde:
        if demand.select is not None:
            selected[demand.name] = max(
                selected.get(demand.name, 0), demand.select[0] + 1
            )

    flow = fg.graph
    inflow: Dict[Tuple[FlowPoint, str], Inflow] = {}
    done: Set[Tuple[FlowPoint, str]] = set()
    active: Set[Tuple[FlowPoint, str]] = set()

    def pull(
        point: FlowPoint, name: str, trail: List[str], demand: Demand
    ) -> None:
        key = (point, name)
        if key in done:
            return
        if key in active:
            raise FlowError(f"field ${name} depends on itself at {point}")
        active.add(key)
        if key not in productions:
            edges = flow.in_edges(point, keys=True) if point in flow else []
            if point in fg.expressions:
                edges = [e for e in edges if e[2].startswith("expr")]
            preds = tuple(
                sorted(
                    ((u, k) for u, _, k in edges),
                    key=lambda e: (str(e[0]), e[1]),
                )
            )
            if preds:
                inflow[key] = preds
                for upstream, _ in preds:
                    pull(upstream, name, trail + [str(upstream)], demand)
            elif name in selected and name not in produced_names:
                productions[key] = Production(
                    point, name, selected[name], ProductionKind.STIMULUS
                )
            elif name in field_defaults:
                productions[key] = Production(
                    point, name, 0, ProductionKind.DEFAULT
                )
            else:
                raise UnresolvedFieldError(
                    name, trail, demand.line, demand.column
                )
        active.discard(key)
        done.add(key)

    for demand in sorted(demands, key=lambda d: (str(d.point), d.name)):
        pull(demand.point, demand.name, [str(demand.point)], demand)

    widths = _field_widths(productions, selected, graph)
    for production in productions.values():
        production.width = widths[production.name]
    for demand in demands + retrograde:
        width = widths.get(demand.name)
        if demand.select is None or width is None:
            continue
        if demand.select[0] >= width:
            raise FieldWidthError(
                demand.name,
                width,
                demand.select[0],
                demand.line,
                demand.column,
            )
    _check_single_driver(flow, productions)

    result = FlowGraph(
        graph=flow,
        expressions=fg.expressions,
        productions=productions,
        demands=demands,
        inflow=inflow,
        retrograde=retrograde,
        resolved=True,
    )
    routes: Dict[str, Set[Tuple[FlowPoint, FlowPoint, str]]] = {}
    for (point, name), preds in inflow.items():
        for upstream, key in preds:
            routes.setdefault(name, set()).add((upstream, point, key))
    channel_fields: Dict[int, Set[str]] = {}
    for name, route in routes.items():
        for _, _, key in route:
            if key.startswith("ch"):
                channel_fields.setdefault(int(key[2:]), set()).add(name)
    result.channel_fields = {
        cid: tuple(sorted(names)) for cid, names in channel_fields.items()
    }
    for point, name in done | set(productions):
        result.point_fields.setdefault(point, {})[name] = widths[name]
    for name in sorted(widths):
        result.fields[name] = Field(
            name,
            widths[name],
            tuple(
                sorted(
                    (p.point for p in productions.values() if p.name == name),
                    key=str,
                )
            ),
            tuple(
                sorted({d.point for d in demands if d.name == name}, key=str)
            ),
            frozenset(routes.get(name, ())),
        )
        logging.debug(
            "Field $%s: %d bits over %d edges.",
            name,
            widths[name],
            len(routes.get(name, ())),
        )
    logging.info("Resolved %d fields.", len(result.fields))
    return result


def _field_widths(
    productions: Dict[Tuple[FlowPoint, str], Production],
    selected: Dict[str, int],
    graph: ScopeGraph,
) -> Dict[str, int]:
    by_name: Dict[str, List[Production]] = {}
    for production in productions.values():
        by_name.setdefault(production.name, []).append(production)
    widths: Dict[str, int] = {}
    pending: Set[str] = set()

    def width_of(name: str) -> int:
        if name in widths:
            return widths[name]
        if name in pending:
            raise FlowError(f"the width of ${name} depends on itself")
        pending.add(name)
        found = set()
        for production in by_name.get(name, []):
            if production.kind is ProductionKind.LOGIC:
                statement = production.placed.statement
                if statement.width is not None:
                    found.add(statement.width[0] - statement.width[1] + 1)
                else:
                    found.add(
                        expression_width(
                            statement.rhs,
                            lambda ref: width_of(ref.name),
                            lambda ref: clog2(graph.replication[ref.name]),
                        )
                    )
            elif production.kind is ProductionKind.SOURCE:
                found.add(production.width)
        if not found:
            found.add(selected.get(name, 1))
        if len(found) > 1:
            raise FlowError(
                f"field ${name} is produced with conflicting widths "
                f"{sorted(found)}"
            )
        pending.discard(name)
        widths[name] = found.pop()
        return widths[name]

    for name in sorted(by_name):
        width_of(name)
    return widths


def _check_single_driver(
    flow: nx.MultiDiGraph, productions: Dict[Tuple[FlowPoint, str], Production]
) -> None:
    by_name: Dict[str, List[FlowPoint]] = {}
    for point, name in productions:
        by_name.setdefault(name, []).append(point)
    for name, points in sorted(by_name.items()):
        ordered = sorted((p for p in points if p in flow), key=str)
        for first, second in itertools.permutations(ordered, 2):
            if nx.has_path(flow, first, second):
                raise MultiplyDrivenFieldError(name, str(first), str(second))


def dump_flow(fg: FlowGraph) -> str:
    """Stable text listing: field, producers, consumers, route edges."""
    lines = []
    for name in sorted(fg.fields):
        record = fg.fields[name]
        lines.append(f"field ${name} width {record.width}")
        for point in record.producers:
            kind = fg.productions[(point, name)].kind.value
            lines.append(f"   producer {point} ({kind})")
        for point in record.consumers:
            lines.append(f"   consumer {point}")
        for upstream, downstream, key in sorted(
            record.route, key=lambda e: (str(e[0]), str(e[1]), e[2])
        ):
            lines.append(f"   route {upstream} -> {downstream} [{key}]")
    return "\n".join(lines) + ("\n" if lines else "")
