"""Text reports of simulation results, compiled designs and the library."""

from typing import Dict, List

import pandas as pd
import tabulate

from tlflow.flow_lib import LIBRARY, ComponentTemplate
from tlflow.simulator import EquivalenceVerdict, SimulationResult
from tlflow.staging import Netlist, NodeKind


def _table(df: pd.DataFrame, display_mode: str) -> str:
    if display_mode == "pretty":
        return tabulate.tabulate(
            df, headers="keys", tablefmt="pretty", showindex=False
        )
    return df.to_string(index=False)


def summary_table(result: SimulationResult) -> pd.DataFrame:
    """One-column overview of a run."""
    df = result.transactions
    delivered = df[df["deliveries"] > 0]
    latency = delivered["deliver_cycle"] - delivered["inject_cycle"]
    rows = [
        ("cycles", result.cycles),
        ("transactions", len(df)),
        ("injected", int(df["inject_cycle"].notna().sum())),
        ("delivered", len(delivered)),
        (
            "mean latency",
            f"{latency.mean():.2f}" if len(delivered) else "n/a",
        ),
        ("max latency", int(latency.max()) if len(delivered) else "n/a"),
        ("drained", "yes" if result.check.drained else "no"),
        ("check failures", len(result.check.violations)),
        ("conservation violations", result.check.conservation_violations),
    ]
    return pd.DataFrame(rows, columns=["metric", "value"])


def format_simulation(
    result: SimulationResult, display_mode: str = "pretty"
) -> str:
    """Summary, per-stop counters and the first check failures of a run."""
    parts = [_table(summary_table(result), display_mode)]
    if not result.counters.empty:
        parts.append(_table(result.counters, display_mode))
    problems: List[str] = list(result.check.violations[:10])
    if len(result.check.violations) > 10:
        problems.append(f"... {len(result.check.violations) - 10} more")
    if not result.check.drained:
        problems.append("drain timed out; still occupied:")
        problems.extend(f"  {name}" for name in result.check.stuck)
    if problems:
        parts.append("\n".join(problems))
    return "\n\n".join(parts) + "\n"


def format_equivalence(verdict: EquivalenceVerdict) -> str:
    if verdict.equivalent:
        return f"equivalent ({verdict.compared} compared)\n"
    lines = [
        f"not equivalent: {len(verdict.divergences)} divergences "
        f"({verdict.compared} compared)",
        f"first: {verdict.first}",
    ]
    return "\n".join(lines) + "\n"


def netlist_table(netlist: Netlist) -> pd.DataFrame:
    """Node counts by kind and operator."""
    counts = {}
    for node in netlist.nodes:
        key = node.op if node.kind is NodeKind.COMB else node.kind.value
        counts[key] = counts.get(key, 0) + 1
    return pd.DataFrame(
        sorted(counts.items()), columns=["node", "count"]
    )


def format_netlist_counts(
    netlist: Netlist, display_mode: str = "pretty"
) -> str:
    return _table(netlist_table(netlist), display_mode)


def library_table(
    library: Dict[str, ComponentTemplate] = LIBRARY
) -> pd.DataFrame:
    """One row per component name, aliases included."""
    rows = []
    for name, template in sorted(library.items()):
        rows.append(
            (
                name,
                ", ".join(kind.value for kind in template.signature),
                " ".join(
                    f"{port}:{handshake.value}"
                    for port, handshake in template.ports.items()
                ),
                template.description,
            )
        )
    return pd.DataFrame(
        rows, columns=["component", "arguments", "ports", "description"]
    )


def format_library(display_mode: str = "pretty") -> str:
    return _table(library_table(), display_mode) + "\n"
