import pytest

from tlflow.cli import compile_source
from tlflow.report import (
    format_equivalence,
    format_library,
    format_netlist_counts,
    format_simulation,
    library_table,
    netlist_table,
    summary_table,
)
from tlflow.simulator import EquivalenceVerdict, StimulusConfig, run
from tlflow.utils import read_corpus


@pytest.fixture(scope="module")
def pythagoras():
    return compile_source(read_corpus("pythagoras.tlv")).netlist


@pytest.fixture(scope="module")
def showcase_run():
    netlist = compile_source(read_corpus("showcase.tlv")).netlist
    return run(netlist, 60, 2, StimulusConfig(0.4, 0.0))


class TestSimulationReport:
    def test_summary_table(self, showcase_run):
        table = summary_table(showcase_run).set_index("metric")["value"]
        assert table["cycles"] == showcase_run.cycles
        assert table["transactions"] == len(showcase_run.records)
        assert table["delivered"] == table["injected"]
        assert table["drained"] == "yes"
        assert table["check failures"] == 0

    def test_summary_without_transactions(self, pythagoras):
        table = summary_table(run(pythagoras, 5)).set_index("metric")["value"]
        assert table["transactions"] == 0
        assert table["mean latency"] == "n/a"

    def test_display_modes(self, showcase_run):
        pretty = format_simulation(showcase_run, "pretty")
        plain = format_simulation(showcase_run, "plain")
        assert "+--" in pretty
        assert "+--" not in plain
        for text in (pretty, plain):
            assert "bypass_taken" in text
            assert "mean latency" in text

    def test_failures_are_listed(self):
        netlist = compile_source(
            read_corpus("showcase.tlv"), mutations=("invert_dest_compare",)
        ).netlist
        result = run(netlist, 100, 1, StimulusConfig(0.3, 0.0))
        text = format_simulation(result, "plain")
        assert result.check.violations or not result.check.drained
        if result.check.violations:
            assert result.check.violations[0] in text
        else:
            assert "drain timed out" in text


class TestEquivalenceReport:
    def test_equivalent(self):
        assert format_equivalence(EquivalenceVerdict(True, 12)) == (
            "equivalent (12 compared)\n"
        )

    def test_divergent(self):
        verdict = EquivalenceVerdict(False, 9, ("tag 3: x", "tag 5: y"))
        assert format_equivalence(verdict) == (
            "not equivalent: 2 divergences (9 compared)\nfirst: tag 3: x\n"
        )


class TestNetlistReport:
    def test_counts(self, pythagoras):
        counts = dict(netlist_table(pythagoras).values.tolist())
        assert counts["pow"] == 2
        assert counts["add"] == 1
        assert counts["sqrt"] == 1
        assert counts["reg"] == 3
        assert counts["input"] == 2
        assert counts["output"] == 1

    def test_format(self, pythagoras):
        assert "sqrt" in format_netlist_counts(pythagoras, "pretty")
        assert "sqrt" in format_netlist_counts(pythagoras, "plain")


class TestLibraryReport:
    def test_rows(self):
        table = library_table().set_index("component")
        assert len(table) == 8
        fifo = table.loc["simple_bypass_fifo_v2"]
        assert fifo["arguments"] == (
            "scope, pipeline, stage, pipeline, stage, integer, scope"
        )
        assert fifo["ports"] == "in:ready/valid out:ready/valid"
        assert table.loc["simple_ring", "ports"] == (
            "in:ring-hop out:ring-hop"
        )
        assert all(table["description"].str.len() > 0)

    def test_format(self):
        text = format_library("plain")
        assert text.endswith("\n")
        assert "opportunistic_flow" in text
