"""Built-in component library.

Templates only create flow structure: pipelines, channels between flow
points, testbench sources and sinks, and the fields their own handshake
logic reads. None of them assigns a transaction field; transaction logic
arrives from the user by lexical reentrance. The hardware behind each
channel is realized by `staging`.
"""

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

from tlflow.config import CONFIG
from tlflow.frontend import ArgKind, Argument
from tlflow.scope_graph import Expansion, StagePoint
from tlflow.utils import clog2


class HandshakeClass(enum.Enum):
    FREE_FLOW = "free-flow"
    READY_VALID = "ready/valid"
    STALL = "stall"
    RING_HOP = "ring-hop"


@dataclass(frozen=True)
class ComponentTemplate:
    name: str
    signature: Tuple[ArgKind, ...]
    expand: Callable[[Expansion, List[Argument]], None]
    ports: Dict[str, HandshakeClass] = field(default_factory=dict)
    description: str = ""


S, P, A, I, G = (
    ArgKind.SCOPE,
    ArgKind.PIPELINE,
    ArgKind.STAGE,
    ArgKind.INTEGER,
    ArgKind.SIGNAL,
)


def _hop_chain(
    exp: Expansion, args: List[Argument], handshake: HandshakeClass
) -> List:
    scope_arg, base, first, last, trans_arg = args
    if first.value < 0 or last.value < first.value:
        raise exp.fail(
            f"hop range [{first.value}, {last.value}] is empty or negative"
        )
    scope = exp.scope(scope_arg)
    trans = exp.trans(trans_arg)
    paths = [
        exp.pipeline(scope, f"{base.name}{i}", trans)
        for i in range(first.value, last.value + 1)
    ]
    for path in paths:
        exp.stage(StagePoint(path, 1))
    for upstream, downstream in zip(paths, paths[1:]):
        exp.channel(
            StagePoint(upstream, 2),
            StagePoint(downstream, 1),
            handshake,
            trans,
        )
    exp.component.params.update(
        {"pipelines": paths, "trans": trans, "base": base.name}
    )
    return paths


def _expand_stall_pipeline(exp: Expansion, args: List[Argument]) -> None:
    paths = _hop_chain(exp, args, HandshakeClass.STALL)
    exp.group(paths, f"{args[1].name}_stall")


def _expand_bp_pipeline(exp: Expansion, args: List[Argument]) -> None:
    _hop_chain(exp, args, HandshakeClass.READY_VALID)


def _point(
    exp: Expansion, scope, pipe: Argument, stage: Argument, trans
) -> StagePoint:
    return StagePoint(exp.pipeline(scope, pipe.name, trans), stage.value)


def _expand_bypass_fifo(exp: Expansion, args: List[Argument]) -> None:
    scope_arg, in_pipe, in_stage, out_pipe, out_stage, depth, trans_arg = args
    if depth.value < 1:
        raise exp.fail(f"FIFO depth must be at least 1, got {depth.value}")
    scope = exp.scope(scope_arg)
    trans = exp.trans(trans_arg)
    channel = exp.channel(
        _point(exp, scope, in_pipe, in_stage, trans),
        _point(exp, scope, out_pipe, out_stage, trans),
        HandshakeClass.READY_VALID,
        trans,
    )
    exp.component.params.update({"depth": depth.value, "channel": channel})


def _expand_arb2(exp: Expansion, args: List[Argument]) -> None:
    scope_arg, in1_pipe, in1_stage, in2_pipe, in2_stage = args[:5]
    out_pipe, out_stage, trans_arg = args[5:]
    scope = exp.scope(scope_arg)
    trans = exp.trans(trans_arg)
    out = _point(exp, scope, out_pipe, out_stage, trans)
    # Both inputs feed the same consumer point; claim it once.
    in1 = exp.channel(
        _point(exp, scope, in1_pipe, in1_stage, trans),
        out,
        HandshakeClass.READY_VALID,
        trans,
    )
    in2 = exp.channel(
        _point(exp, scope, in2_pipe, in2_stage, trans),
        out,
        HandshakeClass.READY_VALID,
        trans,
    )
    exp.component.params.update({"in1": in1, "in2": in2})


def _expand_opportunistic_flow(exp: Expansion, args: List[Argument]) -> None:
    scope_arg, in_pipe, in_stage, taken_pipe, taken_stage = args[:5]
    condition, main_pipe, main_stage, trans_arg = args[5:]
    scope = exp.scope(scope_arg)
    trans = exp.trans(trans_arg)
    source = _point(exp, scope, in_pipe, in_stage, trans)
    taken = exp.channel(
        source,
        _point(exp, scope, taken_pipe, taken_stage, trans),
        HandshakeClass.READY_VALID,
        trans,
    )
    main = exp.channel(
        source,
        _point(exp, scope, main_pipe, main_stage, trans),
        HandshakeClass.READY_VALID,
        trans,
    )
    exp.use(source, (), condition.name)
    exp.component.params.update(
        {
            "taken": taken,
            "main": main,
            "condition": condition.name,
            "inverted": condition.inverted,
        }
    )


def _expand_simple_ring(exp: Expansion, args: List[Argument]) -> None:
    stop_arg, in_pipe, in_stage, out_pipe, out_stage, trans_arg = args
    stop = exp.scope(stop_arg)
    index, ports = exp.replication(stop)
    if ports < 2:
        raise exp.fail(f"a ring needs at least 2 stops, got {ports}")
    trans = exp.trans(trans_arg)
    inject = _point(exp, stop, in_pipe, in_stage, trans)
    channel = exp.channel(
        inject,
        _point(exp, stop, out_pipe, out_stage, trans),
        HandshakeClass.RING_HOP,
        trans,
    )
    exp.use(inject, trans, "dest")
    exp.component.params.update(
        {"channel": channel, "ports": ports, "index": index}
    )


def _expand_router_testbench(exp: Expansion, args: List[Argument]) -> None:
    top_arg, stop_arg, in_pipe, in_stage, out_pipe, out_stage = args
    exp.scope(top_arg)
    stop = exp.scope(stop_arg)
    _, ports = exp.replication(stop)
    trans = exp.trans(None)
    exp.source(
        _point(exp, stop, in_pipe, in_stage, trans),
        trans,
        {"dest": clog2(ports), "tag": CONFIG["tag_width"]},
    )
    exp.sink(_point(exp, stop, out_pipe, out_stage, trans), trans)
    exp.component.params.update({"ports": ports, "trans": trans})


_RV = HandshakeClass.READY_VALID

LIBRARY: Dict[str, ComponentTemplate] = {
    template.name: template
    for template in (
        ComponentTemplate(
            "stall_pipeline",
            (S, P, I, I, S),
            _expand_stall_pipeline,
            {"in": HandshakeClass.STALL, "out": HandshakeClass.STALL},
            "Chain of 1-cycle hops sharing one stall input.",
        ),
        ComponentTemplate(
            "bp_pipeline",
            (S, P, I, I, S),
            _expand_bp_pipeline,
            {"in": _RV, "out": _RV},
            "Chain of fully interlocked ready/valid hops.",
        ),
        ComponentTemplate(
            "simple_bypass_fifo",
            (S, P, A, P, A, I, S),
            _expand_bypass_fifo,
            {"in": _RV, "out": _RV},
            "Circular-buffer FIFO with combinational bypass when empty.",
        ),
        ComponentTemplate(
            "arb2",
            (S, P, A, P, A, P, A, S),
            _expand_arb2,
            {"in1": _RV, "in2": _RV, "out": _RV},
            "Fixed-priority two-input arbiter.",
        ),
        ComponentTemplate(
            "opportunistic_flow",
            (S, P, A, P, A, G, P, A, S),
            _expand_opportunistic_flow,
            {"in": _RV, "taken": _RV, "main": _RV},
            "Take the side path when the condition holds and it is ready.",
        ),
        ComponentTemplate(
            "simple_ring",
            (S, P, A, P, A, S),
            _expand_simple_ring,
            {"in": HandshakeClass.RING_HOP, "out": HandshakeClass.RING_HOP},
            "Unidirectional ring, one hop per stop, through-traffic first.",
        ),
        ComponentTemplate(
            "router_testbench",
            (S, S, P, A, P, A),
            _expand_router_testbench,
            {"in": _RV, "out": _RV},
            "Per-stop random generator and delivery checker.",
        ),
    )
}
LIBRARY["simple_bypass_fifo_v2"] = LIBRARY["simple_bypass_fifo"]
