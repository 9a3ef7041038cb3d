"""Command-line driver: compile, simulate, dump and measure designs."""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from tlflow.config import CONFIG
from tlflow.exceptions import ConfigError, SimulationError, TlflowError
from tlflow.flow_resolver import (
    FlowGraph,
    build_flow_graph,
    dump_flow,
    resolve_fields,
)
from tlflow.frontend import ParseTree, parse, tokenize
from tlflow.report import (
    format_equivalence,
    format_library,
    format_netlist_counts,
    format_simulation,
)
from tlflow.scope_graph import (
    ScopeGraph,
    dump_scope_graph,
    expand_instantiations,
    merge_reentrant,
    resolve_references,
)
from tlflow.simulator import (
    StimulusConfig,
    check_equivalence,
    format_transaction_log,
    run,
    write_vcd,
)
from tlflow.staging import (
    Netlist,
    StagePlan,
    build_netlist,
    dump_netlist,
    plan_stages,
)
from tlflow.utils import read_config_file
from tlflow.verilog_backend import emit_verilog, format_metrics, measure_code

# Flag destination -> CONFIG key.
_FLAG_KEYS = {
    "ports": "ports",
    "cycles": "cycles",
    "seed": "seed",
    "p": "injection_probability",
    "random_backpressure": "backpressure_probability",
    "drain_timeout": "drain_timeout",
    "mutation": "mutations",
    "default_zero": "field_defaults",
    "arb2_priority": "arb2_priority",
}


@dataclass
class CompiledDesign:
    """Every intermediate form of one compilation."""

    source: str
    tree: ParseTree
    graph: ScopeGraph
    flow: FlowGraph
    plan: StagePlan
    netlist: Netlist

    @property
    def expanded(self) -> str:
        return dump_scope_graph(self.graph)


def compile_source(
    source: str,
    ports: int = CONFIG["ports"],
    mutations: Sequence[str] = CONFIG["mutations"],
    field_defaults: Sequence[str] = CONFIG["field_defaults"],
    arb2_priority: str = CONFIG["arb2_priority"],
) -> CompiledDesign:
    """Run the whole compiler on TL-Verilog source text.

    :param source: design source.
    :param ports: replication count of `[*]` scopes.
    :param mutations: fault-injection hooks for the netlist builder.
    :param field_defaults: fields fed a constant 0 where unproduced.
    :param arb2_priority: arb2 input that wins ties.
    :return: CompiledDesign with the scheduled netlist.
    :raise TlflowError: on the first diagnostic of any phase.
    """
    if ports < 1:
        raise ConfigError(f"ports must be at least 1, got {ports}")
    if arb2_priority not in ("in1", "in2"):
        raise ConfigError(
            f"arb2_priority must be in1 or in2, got {arb2_priority}"
        )
    logging.info("Parsing %d lines of source...", source.count("\n") + 1)
    tree = parse(tokenize(source))
    graph = merge_reentrant(tree, ports)
    graph = resolve_references(expand_instantiations(graph))
    logging.info("Resolving transaction fields...")
    flow = resolve_fields(build_flow_graph(graph), graph, field_defaults)
    plan = plan_stages(graph, flow)
    netlist = build_netlist(graph, flow, plan, mutations, arb2_priority)
    return CompiledDesign(source, tree, graph, flow, plan, netlist)


def compile_file(path: str, **kwargs) -> CompiledDesign:
    """`compile_source` on a file; diagnostics remember the file."""
    try:
        return compile_source(Path(path).read_text(encoding="utf-8"), **kwargs)
    except TlflowError as error:
        error.path = error.path or path
        raise


@dataclass
class RunConfig:
    command: str
    inputs: List[str]
    output: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=lambda: dict(CONFIG))
    vcd: Optional[str] = None
    log: Optional[str] = None
    module_name: Optional[str] = None
    display_mode: str = "pretty"

    def compile_options(self) -> Dict[str, Any]:
        return {
            "ports": self.settings["ports"],
            "mutations": tuple(self.settings["mutations"]),
            "field_defaults": tuple(self.settings["field_defaults"]),
            "arb2_priority": self.settings["arb2_priority"],
        }

    def stimulus(self) -> StimulusConfig:
        return StimulusConfig(
            self.settings["injection_probability"],
            self.settings["backpressure_probability"],
            self.settings["drain_timeout"],
            trace=self.vcd is not None,
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-o", "--output", type=str, help="Write the result to this file."
    )
    common.add_argument(
        "--ports",
        type=int,
        help="Replication count of [*] scopes (ring stops); default 4.",
    )
    common.add_argument(
        "--config", type=str, help="File of key=value configuration lines."
    )
    common.add_argument(
        "--mutation",
        action="append",
        help="Fault-injection hook: invert_dest_compare, swap_arb2_priority "
        "or corrupt_staging:FIELD. Repeatable.",
    )
    common.add_argument(
        "--default-zero",
        dest="default_zero",
        action="append",
        metavar="FIELD",
        help="Feed FIELD a constant 0 on paths without a producer.",
    )
    common.add_argument(
        "--arb2-priority",
        dest="arb2_priority",
        choices=["in1", "in2"],
        help="arb2 input that wins when both are valid.",
    )
    common.add_argument("--cycles", type=int, help="Generating cycles.")
    common.add_argument("--seed", type=int, help="PRNG seed.")
    common.add_argument(
        "-p", type=float, help="Per-cycle, per-stop injection probability."
    )
    common.add_argument(
        "--random-backpressure",
        dest="random_backpressure",
        type=float,
        metavar="Q",
        help="Probability that a sink deasserts ready in a cycle.",
    )
    common.add_argument(
        "--drain-timeout",
        dest="drain_timeout",
        type=int,
        help="Cycles allowed for draining in-flight transactions.",
    )
    common.add_argument("--vcd", type=str, help="Write a VCD waveform here.")
    common.add_argument(
        "--log", type=str, help="Write the transaction log here."
    )
    common.add_argument(
        "--module-name",
        dest="module_name",
        type=str,
        help="Verilog module name; defaults to the input file stem.",
    )
    common.add_argument(
        "-d",
        "--display_mode",
        choices=["plain", "pretty"],
        default="pretty",
        help="Table style of reports.",
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="tlflow",
        description="Compile and simulate transaction-level flow designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "compile": "Emit Verilog.",
        "sim": "Simulate with the random testbench and check the results.",
        "metrics": "Report code-size metrics.",
        "dump-flow": "Print the resolved transaction fields.",
        "dump-netlist": "Print the netlist.",
        "dump-scopes": "Print the expanded scope hierarchy.",
    }
    for command, text in helps.items():
        cmd = sub.add_parser(command, parents=[common], help=text)
        cmd.add_argument("input", type=str, help="TL-Verilog source file.")
    equiv = sub.add_parser(
        "equiv", parents=[common], help="Check two designs for equivalence."
    )
    equiv.add_argument("input", type=str)
    equiv.add_argument("other", type=str)
    sub.add_parser(
        "components",
        parents=[common],
        help="List the component library.",
    )
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    """Merge CONFIG, an optional config file and flags (flags win)."""
    settings = dict(CONFIG)
    if args.config:
        settings.update(read_config_file(args.config))
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = tuple(value) if isinstance(value, list) else value
    inputs = [getattr(args, name, None) for name in ("input", "other")]
    inputs = [path for path in inputs if path is not None]
    return RunConfig(
        args.command,
        inputs,
        args.output,
        settings,
        args.vcd,
        args.log,
        args.module_name,
        args.display_mode,
    )


def _write(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
        logging.info("Wrote %s.", path)
    else:
        sys.stdout.write(text)


def _simulate(config: RunConfig, design: CompiledDesign) -> int:
    result = run(
        design.netlist,
        config.settings["cycles"],
        config.settings["seed"],
        config.stimulus(),
    )
    _write(format_simulation(result, config.display_mode), config.output)
    if config.log:
        Path(config.log).write_text(
            format_transaction_log(result.records), encoding="utf-8"
        )
    if config.vcd:
        with open(config.vcd, "w", encoding="utf-8") as stream:
            write_vcd(stream, result, Path(config.inputs[0]).stem)
    result.raise_for_failure()
    return 0


def execute(config: RunConfig) -> int:
    """Run one subcommand; exceptions propagate to `main`."""
    if config.command == "components":
        _write(format_library(config.display_mode), config.output)
        return 0
    options = config.compile_options()
    design = compile_file(config.inputs[0], **options)
    if config.command == "compile":
        name = config.module_name or Path(config.inputs[0]).stem
        _write(emit_verilog(design.netlist, name).text, config.output)
        if config.output:
            print(format_netlist_counts(design.netlist, config.display_mode))
    elif config.command == "sim":
        return _simulate(config, design)
    elif config.command == "metrics":
        verilog = emit_verilog(design.netlist).text
        metrics = measure_code(design.source, design.expanded, verilog)
        _write(format_metrics(metrics), config.output)
    elif config.command == "dump-flow":
        _write(dump_flow(design.flow), config.output)
    elif config.command == "dump-netlist":
        _write(dump_netlist(design.netlist), config.output)
    elif config.command == "dump-scopes":
        _write(design.expanded, config.output)
    else:
        other = compile_file(config.inputs[1], **options)
        verdict = check_equivalence(
            design.netlist,
            other.netlist,
            config.settings["cycles"],
            config.settings["seed"],
            config.stimulus(),
        )
        _write(format_equivalence(verdict), config.output)
        return 0 if verdict.equivalent else 2
    return 0


def _diagnostic(error: TlflowError, paths: Sequence[str]) -> Tuple[str, int]:
    code = 2 if isinstance(error, SimulationError) else 1
    path = error.path or paths[0]
    return f"{error.location(path)}: error: {error}", code


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point. Exit codes: 0 success, 1 diagnostics, 2 check failure.

    :param argv: arguments without the program name; defaults to sys.argv.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.getLogger().setLevel(level)
    try:
        config = run_config(args)
    except TlflowError as error:
        location = error.location(args.config)
        print(f"{location}: error: {error}", file=sys.stderr)
        return 1
    except OSError as error:
        reason = error.strerror or error
        print(f"{args.config}: error: {reason}", file=sys.stderr)
        return 1
    for path in config.inputs:
        if not Path(path).is_file():
            print(f"{path}: error: no such file", file=sys.stderr)
            return 1
    try:
        return execute(config)
    except TlflowError as error:
        message, code = _diagnostic(error, config.inputs)
        print(message, file=sys.stderr)
        return code
