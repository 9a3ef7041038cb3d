"""Two-phase cycle simulation of a Netlist with a transaction testbench.

Each cycle first settles every combinational node in schedule order from the
inputs and the register outputs, then commits all register next-values at
once. The testbench keeps an unbounded queue per source so the stimulus does
not depend on how fast the design accepts it; equivalence checks rely on
that.
"""

import functools
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import (
    IO,
    Callable,
    Deque,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import pandas as pd

from tlflow.config import CONFIG
from tlflow.exceptions import (
    ConfigError,
    DrainTimeoutError,
    InterfaceMismatchError,
    SimulationError,
)
from tlflow.staging import Netlist, Node, NodeKind, PortBinding, ProbeKind
from tlflow.utils import mask, sanitize_identifier

# Delivered field -> (injected fields it depends on, expected value).
PAYLOAD_ORACLES: Dict[str, Tuple[Tuple[str, ...], Callable[..., int]]] = {
    "cc": (("aa", "bb"), lambda aa, bb: math.isqrt(aa * aa + bb * bb)),
}

_MASKED = ("add", "sub", "mul", "not", "neg")


# Evaluation


def _apply(node: Node, args: Sequence[int]) -> int:
    op = node.op
    if op == "add":
        value = args[0] + args[1]
    elif op == "sub":
        value = args[0] - args[1]
    elif op == "mul":
        value = args[0] * args[1]
    elif op == "pow":
        value = args[0] ** node.params[0]
    elif op in ("eq", "ne", "lt", "gt", "le", "ge"):
        value = int(
            {
                "eq": args[0] == args[1],
                "ne": args[0] != args[1],
                "lt": args[0] < args[1],
                "gt": args[0] > args[1],
                "le": args[0] <= args[1],
                "ge": args[0] >= args[1],
            }[op]
        )
    elif op == "and":
        value = args[0] & args[1]
    elif op == "or":
        value = args[0] | args[1]
    elif op == "xor":
        value = args[0] ^ args[1]
    elif op == "not":
        value = ~args[0]
    elif op == "lnot":
        value = int(not args[0])
    elif op == "neg":
        value = -args[0]
    elif op == "land":
        value = int(bool(args[0]) and bool(args[1]))
    elif op == "lor":
        value = int(bool(args[0]) or bool(args[1]))
    elif op == "mux":
        value = args[1] if args[0] else args[2]
    elif op == "slice":
        value = args[0] >> node.params[1]
    elif op == "resize":
        value = args[0]
    elif op == "sqrt":
        value = math.isqrt(args[0])
    else:
        raise AssertionError(f"unknown operator {op}")
    return value & mask(node.width)


_TEMPLATES = {
    "add": "{0} + {1}",
    "sub": "{0} - {1}",
    "mul": "{0} * {1}",
    "eq": "int({0} == {1})",
    "ne": "int({0} != {1})",
    "lt": "int({0} < {1})",
    "gt": "int({0} > {1})",
    "le": "int({0} <= {1})",
    "ge": "int({0} >= {1})",
    "and": "{0} & {1}",
    "or": "{0} | {1}",
    "xor": "{0} ^ {1}",
    "not": "~{0}",
    "lnot": "int(not {0})",
    "neg": "-{0}",
    "land": "int(bool({0}) and bool({1}))",
    "lor": "int(bool({0}) or bool({1}))",
    "mux": "{1} if {0} else {2}",
    "sqrt": "isqrt({0})",
}


def _python_expression(netlist: Netlist, node: Node) -> str:
    args = []
    for operand in node.operands:
        source = netlist.nodes[operand]
        args.append(
            str(source.value)
            if source.kind is NodeKind.CONST
            else f"v[{operand}]"
        )
    m = mask(node.width)
    if node.kind is NodeKind.OUTPUT:
        return args[0]
    if node.op == "pow":
        return f"({args[0]} ** {node.params[0]}) & {m}"
    if node.op == "slice":
        return f"({args[0]} >> {node.params[1]}) & {m}"
    if node.op == "resize":
        return f"{args[0]} & {m}"
    text = _TEMPLATES[node.op].format(*args)
    return f"({text}) & {m}" if node.op in _MASKED else text


@dataclass(frozen=True)
class _Compiled:
    evaluate: Callable[[List[int]], None]
    commit: Callable[[List[int]], None]
    source: str


@functools.lru_cache(maxsize=32)
def _compile(netlist: Netlist) -> _Compiled:
    """Straight-line Python for one netlist: `evaluate(v)` and `commit(v)`."""
    lines = ["def evaluate(v):"]
    for node_id in netlist.schedule:
        node = netlist.nodes[node_id]
        lines.append(f"    v[{node_id}] = {_python_expression(netlist, node)}")
    lines.append("    return None")
    lines.append("def commit(v):")
    if netlist.registers:
        targets = ", ".join(f"v[{r}]" for r in netlist.registers)
        drivers = []
        for reg in netlist.registers:
            driver = netlist.nodes[netlist.nodes[reg].operands[0]]
            drivers.append(
                str(driver.value)
                if driver.kind is NodeKind.CONST
                else f"v[{driver.id}]"
            )
        lines.append(f"    {targets}, = {', '.join(drivers)},")
    lines.append("    return None")
    source = "\n".join(lines) + "\n"
    namespace: Dict[str, Callable] = {"isqrt": math.isqrt}
    code = compile(source, "<netlist>", "exec")
    exec(code, namespace)  # pylint: disable=W0122
    logging.debug("Compiled netlist evaluator: %d lines.", len(lines))
    return _Compiled(namespace["evaluate"], namespace["commit"], source)


@dataclass
class SimState:
    """Values of every node after the last settled cycle."""

    cycle: int
    values: List[int]
    rng: random.Random


def initial_state(netlist: Netlist, seed: int = CONFIG["seed"]) -> SimState:
    values = [0] * len(netlist.nodes)
    for node in netlist.nodes:
        if node.kind is NodeKind.CONST:
            values[node.id] = node.value
    return SimState(0, values, random.Random(seed))


def step(
    state: SimState,
    netlist: Netlist,
    inputs: Optional[Mapping[str, int]] = None,
) -> SimState:
    """Simulate one cycle without the compiled evaluator.

    Inputs not named keep their previous value.

    :param state: state before the cycle.
    :param netlist: scheduled Netlist.
    :param inputs: input name -> value; values are masked to the port width.
    :return: new SimState holding the cycle's settled combinational values
    and the committed register values.
    :raise SimulationError: on an unknown input name.
    """
    values = list(state.values)
    for name, value in (inputs or {}).items():
        try:
            node = netlist.by_name(name)
        except KeyError as exc:
            raise SimulationError(f"no input named {name!r}") from exc
        if node.kind is not NodeKind.INPUT:
            raise SimulationError(f"{name!r} is an output, not an input")
        values[node.id] = value & mask(node.width)
    for node_id in netlist.schedule:
        node = netlist.nodes[node_id]
        args = [values[o] for o in node.operands]
        values[node_id] = args[0] if node.kind is NodeKind.OUTPUT else _apply(
            node, args
        )
    updates = [values[netlist.nodes[r].operands[0]] for r in netlist.registers]
    for reg, value in zip(netlist.registers, updates):
        values[reg] = value
    return SimState(state.cycle + 1, values, state.rng)


def peek(state: SimState, netlist: Netlist, name: str) -> int:
    return state.values[netlist.by_name(name).id]


# Testbench


@dataclass
class StimulusConfig:
    injection_probability: float = CONFIG["injection_probability"]
    backpressure_probability: float = CONFIG["backpressure_probability"]
    drain_timeout: int = CONFIG["drain_timeout"]
    drain: bool = True
    trace: bool = False

    def __post_init__(self) -> None:
        for name in ("injection_probability", "backpressure_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.drain_timeout < 0:
            raise ConfigError("drain_timeout must be non-negative")


@dataclass
class TransactionRecord:
    tag: int
    src: int
    dest: int
    fields: Dict[str, int]
    created_cycle: int
    inject_cycle: Optional[int] = None
    deliveries: List[Tuple[int, int, Dict[str, int]]] = field(
        default_factory=list
    )


@dataclass(frozen=True)
class PerfCounters:
    stop: int
    injected: int = 0
    delivered: int = 0
    bypass_taken: int = 0
    forced_onto_ring: int = 0
    latency_total: int = 0


@dataclass
class CheckReport:
    violations: List[str] = field(default_factory=list)
    conservation_violations: int = 0
    drained: bool = True
    stuck: List[str] = field(default_factory=list)
    drain_timeout: int = 0

    @property
    def ok(self) -> bool:
        return (
            self.drained
            and not self.violations
            and not self.conservation_violations
        )


@dataclass
class SimulationResult:
    cycles: int
    records: List[TransactionRecord]
    transactions: pd.DataFrame
    counters: pd.DataFrame
    check: CheckReport
    trace: List[Tuple[int, ...]] = field(default_factory=list)
    trace_names: Tuple[str, ...] = ()
    trace_widths: Tuple[int, ...] = ()

    def raise_for_failure(self) -> None:
        """Raise if any end-of-run check failed."""
        if not self.check.drained:
            raise DrainTimeoutError(self.check.drain_timeout, self.check.stuck)
        problems = list(self.check.violations)
        if self.check.conservation_violations:
            problems.insert(
                0,
                f"conservation violated in "
                f"{self.check.conservation_violations} cycles",
            )
        if problems:
            more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
            raise SimulationError(
                f"{len(problems)} check failures: "
                + "; ".join(problems[:5])
                + more
            )


class _Port:
    """Flat indices of one testbench stop, plus its source queue."""

    def __init__(self, netlist: Netlist, binding: PortBinding) -> None:
        self.stop = binding.stop
        self.src_valid = binding.source_valid
        self.src_ready = binding.source_ready
        self.src_fields = [
            (name, node, netlist.nodes[node].width)
            for name, node in binding.source_fields
        ]
        self.sink_valid = binding.sink_valid
        self.sink_ready = binding.sink_ready
        self.sink_fields = list(binding.sink_fields)
        self.queue: Deque[TransactionRecord] = deque()


class _Testbench:
    # pylint: disable=R0902

    def __init__(
        self, netlist: Netlist, seed: int, config: StimulusConfig
    ) -> None:
        self.netlist = netlist
        self.config = config
        self.rng = random.Random(seed)
        self.compiled = _compile(netlist)
        self.values = initial_state(netlist, seed).values
        self.ports = sorted(
            (_Port(netlist, b) for b in netlist.ports), key=lambda p: p.stop
        )
        self.stimulus = sorted(
            (netlist.nodes[i] for i in netlist.stimulus), key=lambda n: n.name
        )
        self.records: Dict[int, TransactionRecord] = {}
        self.next_tag = 0
        self.injected = 0
        self.delivered = 0
        self.violations: List[str] = []
        self.conservation_violations = 0
        self.occupancy = [
            p.node for p in netlist.probes if p.kind is ProbeKind.OCCUPANCY
        ]
        self.perf = {
            p.stop: {"bypass_taken": 0, "forced_onto_ring": 0}
            for p in self.ports
        }
        self.perf_probes = [
            (p.stop, p.kind.value, p.node)
            for p in netlist.probes
            if p.kind is not ProbeKind.OCCUPANCY
        ]
        traced = [
            node.id
            for node in netlist.nodes
            if node.kind
            in (NodeKind.INPUT, NodeKind.OUTPUT, NodeKind.REGISTER)
        ]
        self.traced = traced if config.trace else []
        self.trace: List[Tuple[int, ...]] = []

    def generate(self, cycle: int) -> None:
        for port in self.ports:
            if self.rng.random() >= self.config.injection_probability:
                continue
            fields: Dict[str, int] = {}
            dest = self.rng.randrange(len(self.ports))
            for name, _, width in port.src_fields:
                if name == "dest":
                    fields[name] = dest & mask(width)
                elif name != "tag":
                    fields[name] = self.rng.getrandbits(width)
            tag = self.next_tag
            self.next_tag += 1
            for name, _, width in port.src_fields:
                if name == "tag":
                    fields[name] = tag & mask(width)
            record = TransactionRecord(tag, port.stop, dest, fields, cycle)
            self.records[tag] = record
            port.queue.append(record)

    def drive(self) -> None:
        v = self.values
        for port in self.ports:
            head = port.queue[0] if port.queue else None
            v[port.src_valid] = int(head is not None)
            for name, node, _ in port.src_fields:
                v[node] = head.fields.get(name, 0) if head else 0
        q = self.config.backpressure_probability
        for port in self.ports:
            ready = 1
            if q > 0 and self.rng.random() < q:
                ready = 0
            v[port.sink_ready] = ready
        for node in self.stimulus:
            v[node.id] = self.rng.getrandbits(node.width)

    def observe(self, cycle: int) -> None:
        v = self.values
        for port in self.ports:
            if v[port.src_valid] and v[port.src_ready]:
                record = port.queue.popleft()
                record.inject_cycle = cycle
                self.injected += 1
            if v[port.sink_valid] and v[port.sink_ready]:
                self.deliver(cycle, port)
        for stop, kind, node in self.perf_probes:
            if v[node]:
                self.perf.setdefault(
                    stop, {"bypass_taken": 0, "forced_onto_ring": 0}
                )[kind] += 1

    def deliver(self, cycle: int, port: _Port) -> None:
        fields = {name: self.values[node] for name, node in port.sink_fields}
        self.delivered += 1
        tag = fields.get("tag")
        record = self.records.get(tag)
        if record is None or record.inject_cycle is None:
            self.violations.append(
                f"cycle {cycle}: stop {port.stop} delivered unknown tag {tag}"
            )
            return
        record.deliveries.append((cycle, port.stop, fields))

    def in_flight(self) -> int:
        return self.injected - self.delivered

    def cycle(self, cycle: int, generate: bool) -> None:
        occupancy = sum(self.values[n] for n in self.occupancy)
        if self.ports and occupancy != self.in_flight():
            self.conservation_violations += 1
            if self.conservation_violations == 1:
                logging.warning(
                    "Conservation violated at cycle %d: %d in flight, "
                    "%d occupied.",
                    cycle,
                    self.in_flight(),
                    occupancy,
                )
        if generate:
            self.generate(cycle)
        self.drive()
        self.compiled.evaluate(self.values)
        self.observe(cycle)
        if self.traced:
            self.trace.append(tuple(self.values[n] for n in self.traced))
        self.compiled.commit(self.values)

    def idle(self) -> bool:
        return self.in_flight() == 0 and not any(p.queue for p in self.ports)

    def stuck(self) -> List[str]:
        names = [
            self.netlist.describe(p.node)
            for p in self.netlist.probes
            if p.kind is ProbeKind.OCCUPANCY and self.values[p.node]
        ]
        waiting = sorted(
            r.tag
            for r in self.records.values()
            if not r.deliveries and r.inject_cycle is not None
        )
        names.extend(f"tag {tag} in flight" for tag in waiting[:8])
        queued = sum(len(p.queue) for p in self.ports)
        if queued:
            names.append(f"{queued} transactions waiting at sources")
        return names


def _check_records(
    records: Sequence[TransactionRecord], drained: bool
) -> List[str]:
    violations = []
    for record in records:
        if len(record.deliveries) > 1:
            violations.append(
                f"tag {record.tag} delivered {len(record.deliveries)} times"
            )
        if not record.deliveries:
            if drained and record.inject_cycle is not None:
                violations.append(f"tag {record.tag} never delivered")
            continue
        cycle, stop, fields = record.deliveries[0]
        if stop != record.dest:
            violations.append(
                f"tag {record.tag} for stop {record.dest} delivered at "
                f"stop {stop}"
            )
        if cycle < record.inject_cycle:
            violations.append(f"tag {record.tag} delivered before injection")
        for name, (inputs, oracle) in PAYLOAD_ORACLES.items():
            if name in fields and all(i in record.fields for i in inputs):
                expected = oracle(*(record.fields[i] for i in inputs))
                if fields[name] != expected:
                    violations.append(
                        f"tag {record.tag}: ${name} is {fields[name]}, "
                        f"expected {expected}"
                    )
    return violations


def _transactions_frame(records: Sequence[TransactionRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        delivery = record.deliveries[0] if record.deliveries else None
        rows.append(
            {
                "tag": record.tag,
                "src": record.src,
                "dest": record.dest,
                "created_cycle": record.created_cycle,
                "inject_cycle": record.inject_cycle,
                "deliver_cycle": delivery[0] if delivery else None,
                "deliver_port": delivery[1] if delivery else None,
                "deliveries": len(record.deliveries),
            }
        )
    columns = [
        "tag",
        "src",
        "dest",
        "created_cycle",
        "inject_cycle",
        "deliver_cycle",
        "deliver_port",
        "deliveries",
    ]
    df = pd.DataFrame(rows, columns=columns)
    cycles = ["inject_cycle", "deliver_cycle", "deliver_port"]
    df[cycles] = df[cycles].astype("Int64")
    return df


def _order_violations(df: pd.DataFrame) -> List[str]:
    """Per (source, dest) delivery order, for source != dest."""
    delivered = df[(df["deliveries"] == 1) & (df["src"] != df["dest"])]
    violations = []
    for (src, dest), group in delivered.sort_values("tag").groupby(
        ["src", "dest"]
    ):
        if not group["deliver_cycle"].is_monotonic_increasing:
            violations.append(f"deliveries from {src} to {dest} reordered")
    return violations


def _counters_frame(bench: _Testbench, df: pd.DataFrame) -> pd.DataFrame:
    counters = []
    for port in bench.ports:
        injected = df[(df["src"] == port.stop) & df["inject_cycle"].notna()]
        delivered = df[df["deliver_port"] == port.stop]
        latency = injected["deliver_cycle"] - injected["inject_cycle"]
        perf = bench.perf.get(port.stop, {})
        counters.append(
            PerfCounters(
                port.stop,
                len(injected),
                len(delivered),
                perf.get("bypass_taken", 0),
                perf.get("forced_onto_ring", 0),
                int(latency.dropna().sum()),
            )
        )
    return pd.DataFrame(
        [vars(c) for c in counters],
        columns=[
            "stop",
            "injected",
            "delivered",
            "bypass_taken",
            "forced_onto_ring",
            "latency_total",
        ],
    )


def _perf_violations(
    netlist: Netlist, df: pd.DataFrame, counters: pd.DataFrame
) -> List[str]:
    """Every locally destined transaction is either bypassed or forced."""
    stops = {
        p.stop for p in netlist.probes if p.kind is ProbeKind.BYPASS_TAKEN
    }
    violations = []
    for _, row in counters.iterrows():
        if row["stop"] not in stops:
            continue
        local = len(
            df[
                (df["src"] == row["stop"])
                & (df["dest"] == row["stop"])
                & df["inject_cycle"].notna()
            ]
        )
        steered = row["bypass_taken"] + row["forced_onto_ring"]
        if steered != local:
            violations.append(
                f"stop {row['stop']}: {steered} local transactions steered, "
                f"{local} injected"
            )
    return violations


def run(
    netlist: Netlist,
    cycles: int = CONFIG["cycles"],
    seed: int = CONFIG["seed"],
    config: Optional[StimulusConfig] = None,
) -> SimulationResult:
    """Simulate a netlist under random testbench stimulus.

    For `cycles` cycles every stop offers a new transaction with the
    injection probability. Then, if draining, no new transactions are made
    and the simulation continues until nothing is queued or in flight, or
    until the drain timeout.

    :param netlist: scheduled Netlist.
    :param cycles: number of generating cycles (>= 0).
    :param seed: PRNG seed; identical arguments give identical results.
    :param config: StimulusConfig; defaults from `config.CONFIG`.
    :return: SimulationResult with records, counters and check report.
    :raise SimulationError: on a negative cycle count.
    """
    if cycles < 0:
        raise SimulationError(f"cycles must be non-negative, got {cycles}")
    config = config or StimulusConfig()
    bench = _Testbench(netlist, seed, config)
    logging.info(
        "Simulating %d cycles over %d stops (seed %d, p=%.2f, q=%.2f)...",
        cycles,
        len(bench.ports),
        seed,
        config.injection_probability,
        config.backpressure_probability,
    )
    for cycle in range(cycles):
        bench.cycle(cycle, generate=True)
    total = cycles
    drained = True
    if config.drain and cycles and bench.ports:
        limit = cycles + config.drain_timeout
        while not bench.idle() and total < limit:
            bench.cycle(total, generate=False)
            total += 1
        drained = bench.idle()
        if not drained:
            logging.warning(
                "Drain did not complete within %d cycles.",
                config.drain_timeout,
            )
    records = [bench.records[tag] for tag in sorted(bench.records)]
    df = _transactions_frame(records)
    counters = _counters_frame(bench, df)
    check = CheckReport(
        violations=bench.violations + _check_records(records, drained),
        conservation_violations=bench.conservation_violations,
        drained=drained,
        stuck=[] if drained else bench.stuck(),
        drain_timeout=config.drain_timeout,
    )
    check.violations.extend(_order_violations(df))
    if drained and config.drain and cycles:
        check.violations.extend(_perf_violations(netlist, df, counters))
    logging.info(
        "Ran %d cycles: %d transactions injected, %d delivered, %d check "
        "failures.",
        total,
        bench.injected,
        bench.delivered,
        len(check.violations) + check.conservation_violations,
    )
    return SimulationResult(
        total,
        records,
        df,
        counters,
        check,
        bench.trace,
        tuple(netlist.describe(n) for n in bench.traced),
        tuple(netlist.nodes[n].width for n in bench.traced),
    )


# Equivalence


@dataclass(frozen=True)
class EquivalenceVerdict:
    equivalent: bool
    compared: int
    divergences: Tuple[str, ...] = ()

    @property
    def first(self) -> Optional[str]:
        return self.divergences[0] if self.divergences else None


def _interface(netlist: Netlist) -> Tuple:
    widths = netlist.nodes
    ports = tuple(
        (
            b.stop,
            tuple((n, widths[i].width) for n, i in b.source_fields),
            tuple(n for n, _ in b.sink_fields),
        )
        for b in sorted(netlist.ports, key=lambda b: b.stop)
    )
    stimulus = tuple(
        sorted((widths[i].name, widths[i].width) for i in netlist.stimulus)
    )
    outputs = tuple(sorted(widths[i].name for i in netlist.outputs))
    return ports, stimulus, (() if ports else outputs)


def _compare_transactions(
    a: SimulationResult, b: SimulationResult
) -> List[str]:
    divergences = []
    for record_a, record_b in zip(a.records, b.records):
        seen_a = [(port, fields) for _, port, fields in record_a.deliveries]
        seen_b = [(port, fields) for _, port, fields in record_b.deliveries]
        if seen_a != seen_b:
            divergences.append(
                f"tag {record_a.tag}: delivered {seen_a} vs {seen_b}"
            )
    def order(result):
        df = result.transactions
        remote = df[(df["src"] != df["dest"]) & (df["deliveries"] > 0)]
        return {
            key: tuple(group.sort_values("deliver_cycle")["tag"])
            for key, group in remote.groupby(["src", "dest"])
        }

    order_a, order_b = order(a), order(b)
    for key in sorted(set(order_a) | set(order_b)):
        if order_a.get(key) != order_b.get(key):
            divergences.append(f"delivery order from {key[0]} to {key[1]}")
    return divergences


def _compare_traces(
    a: SimulationResult, b: SimulationResult, names: Sequence[str]
) -> List[str]:
    def outputs(result, netlist_outputs):
        index = {name: i for i, name in enumerate(result.trace_names)}
        return {
            name: [row[index[name]] for row in result.trace]
            for name in netlist_outputs
        }

    seq_a, seq_b = outputs(a, names), outputs(b, names)
    divergences = []
    for name in names:
        for cycle, (x, y) in enumerate(zip(seq_a[name], seq_b[name])):
            if x != y:
                divergences.append(f"{name} at cycle {cycle}: {x} vs {y}")
                break
    return divergences


def check_equivalence(
    netlist_a: Netlist,
    netlist_b: Netlist,
    cycles: int = CONFIG["cycles"],
    seed: int = CONFIG["seed"],
    config: Optional[StimulusConfig] = None,
) -> EquivalenceVerdict:
    """Compare two netlists transaction by transaction on one stimulus.

    Testbench designs are compared by the fields and port of every
    delivery and by per-(source, dest) delivery order; cycle numbers are
    ignored. Designs without a testbench are compared output by output,
    cycle by cycle.

    :raise InterfaceMismatchError: if the testbench fields, stimulus inputs
    or outputs differ.
    """
    if _interface(netlist_a) != _interface(netlist_b):
        raise InterfaceMismatchError(
            "the designs expose different testbench fields, stimulus "
            "inputs or outputs"
        )
    config = config or StimulusConfig()
    if not netlist_a.ports:
        config = StimulusConfig(
            config.injection_probability,
            config.backpressure_probability,
            config.drain_timeout,
            config.drain,
            trace=True,
        )
    result_a = run(netlist_a, cycles, seed, config)
    result_b = run(netlist_b, cycles, seed, config)
    if netlist_a.ports:
        divergences = _compare_transactions(result_a, result_b)
        compared = len(result_a.records)
    else:
        names = sorted(netlist_a.nodes[i].name for i in netlist_a.outputs)
        divergences = _compare_traces(result_a, result_b, names)
        compared = len(result_a.trace)
    verdict = EquivalenceVerdict(not divergences, compared, tuple(divergences))
    if verdict.equivalent:
        logging.info("Designs equivalent over %d comparisons.", compared)
    else:
        logging.info("Designs diverge: %s", verdict.first)
    return verdict


# Output


def format_transaction_log(records: Sequence[TransactionRecord]) -> str:
    """`tag src dest inject_cycle deliver_cycle field=value...` per record."""
    lines = []
    for record in sorted(records, key=lambda r: r.tag):
        fields = {
            k: v for k, v in record.fields.items() if k not in ("tag", "dest")
        }
        deliver = "-"
        if record.deliveries:
            cycle, _, delivered = record.deliveries[0]
            deliver = str(cycle)
            fields.update({k: v for k, v in delivered.items() if k != "tag"})
        inject = "-"
        if record.inject_cycle is not None:
            inject = str(record.inject_cycle)
        payload = " ".join(f"{k}={fields[k]}" for k in sorted(fields))
        line = f"{record.tag} {record.src} {record.dest} {inject} {deliver}"
        lines.append(f"{line} {payload}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def _vcd_code(index: int) -> str:
    chars = []
    index += 1
    while index:
        index, digit = divmod(index - 1, 94)
        chars.append(chr(33 + digit))
    return "".join(chars)


def _vcd_value(value: int, width: int, code: str) -> str:
    if width == 1:
        return f"{value}{code}"
    return f"b{value:b} {code}"


def write_vcd(
    stream: IO[str], result: SimulationResult, module_name: str = "top"
) -> None:
    """Dump a traced run as a VCD waveform, one time unit per cycle."""
    if not result.trace_names:
        raise SimulationError("the run was not traced; enable tracing first")
    codes = [_vcd_code(i) for i in range(len(result.trace_names))]
    seen: Dict[str, int] = {}
    stream.write("$version tlflow $end\n$timescale 1ns $end\n")
    stream.write(f"$scope module {sanitize_identifier(module_name)} $end\n")
    columns = zip(result.trace_names, result.trace_widths, codes)
    for name, width, code in columns:
        ident = sanitize_identifier(name)
        seen[ident] = seen.get(ident, 0) + 1
        if seen[ident] > 1:
            ident = f"{ident}_{seen[ident] - 1}"
        stream.write(f"$var wire {width} {code} {ident} $end\n")
    stream.write("$upscope $end\n$enddefinitions $end\n")
    previous: Optional[Tuple[int, ...]] = None
    for cycle, row in enumerate(result.trace):
        changes = [
            _vcd_value(value, width, code)
            for i, (value, width, code) in enumerate(
                zip(row, result.trace_widths, codes)
            )
            if previous is None or previous[i] != value
        ]
        if cycle == 0:
            stream.write("#0\n$dumpvars\n")
            stream.write("".join(f"{c}\n" for c in changes))
            stream.write("$end\n")
        elif changes:
            stream.write(f"#{cycle}\n")
            stream.write("".join(f"{c}\n" for c in changes))
        previous = row
    stream.write(f"#{len(result.trace)}\n")
