import pytest

from tlflow.cli import compile_source
from tlflow.exceptions import ElaborationError
from tlflow.flow_lib import LIBRARY, HandshakeClass
from tlflow.frontend import ArgKind, parse_source
from tlflow.scope_graph import expand_instantiations, merge_reentrant
from tlflow.utils import read_corpus


def _expand(source, ports=4):
    return expand_instantiations(merge_reentrant(parse_source(source), ports))


class TestLibrary:
    def test_library_contents(self):
        assert set(LIBRARY) == {
            "stall_pipeline",
            "bp_pipeline",
            "simple_bypass_fifo",
            "simple_bypass_fifo_v2",
            "arb2",
            "opportunistic_flow",
            "simple_ring",
            "router_testbench",
        }
        fifo = LIBRARY["simple_bypass_fifo"]
        assert LIBRARY["simple_bypass_fifo_v2"] is fifo

    def test_signatures(self):
        assert LIBRARY["arb2"].signature[0] is ArgKind.SCOPE
        assert len(LIBRARY["opportunistic_flow"].signature) == 9
        assert ArgKind.SIGNAL in LIBRARY["opportunistic_flow"].signature


class TestHopPipelines:
    def test_stall_pipeline_group(self):
        graph = _expand("/s[*]\n   m4+stall_pipeline(/s, |st, 0, 2, /trans)\n")
        (group,) = graph.groups.values()
        assert [p.pipeline for p in group.pipelines] == ["st0", "st1", "st2"]
        assert group.stall_input == "st_stall"
        assert len(graph.channels) == 2
        handshakes = {c.handshake for c in graph.channels.values()}
        assert handshakes == {HandshakeClass.STALL}

    def test_bp_pipeline_hops(self):
        graph = _expand("/s[*]\n   m4+bp_pipeline(/s, |bp, 1, 3, /trans)\n")
        assert not graph.groups
        hops = [
            (str(c.producer.point), str(c.consumer.point))
            for c in graph.channels.values()
        ]
        assert hops == [
            ("/s[*]|bp1@2", "/s[*]|bp2@1"),
            ("/s[*]|bp2@2", "/s[*]|bp3@1"),
        ]

    def test_empty_range(self):
        with pytest.raises(ElaborationError, match="empty or negative"):
            _expand("/s[*]\n   m4+bp_pipeline(/s, |bp, 3, 1, /trans)\n")


class TestComponents:
    def test_fifo_depth(self):
        with pytest.raises(ElaborationError, match="depth must be at least 1"):
            _expand(
                "/s[*]\n"
                "   m4+simple_bypass_fifo(/s, |a, @1, |b, @1, 0, /trans)\n"
            )

    def test_flow_point_claimed_twice(self):
        with pytest.raises(ElaborationError, match="already claimed"):
            _expand(
                "/s[*]\n"
                "   m4+simple_bypass_fifo(/s, |a, @1, |b, @1, 4, /trans)\n"
                "   m4+simple_bypass_fifo(/s, |a, @1, |c, @1, 4, /trans)\n"
            )

    def test_arb2_shares_consumer(self):
        graph = _expand(
            "/s[*]\n   m4+arb2(/s, |hi, @1, |lo, @1, |out, @1, /trans)\n"
        )
        consumers = {str(c.consumer.point) for c in graph.channels.values()}
        assert consumers == {"/s[*]|out@1"}

    def test_opportunistic_flow_reads_condition(self):
        graph = _expand(
            "/s[*]\n   m4+opportunistic_flow(/s, |in, @1, |side, @1, !$go, "
            "|main, @1, /trans)\n"
        )
        (use,) = graph.uses
        assert use.name == "go" and use.trans == ()
        (component,) = graph.components
        assert component.params["inverted"]

    def test_ring_needs_two_stops(self):
        with pytest.raises(ElaborationError, match="at least 2 stops"):
            compile_source(read_corpus("showcase.tlv"), ports=1)

    def test_ring_needs_replicated_scope(self):
        with pytest.raises(ElaborationError, match="not replicated"):
            _expand("/s\n   m4+simple_ring(/s, |a, @1, |b, @1, /trans)\n")

    def test_testbench_fields(self):
        graph = _expand(read_corpus("showcase.tlv"), ports=8)
        (source,) = graph.sources
        assert source.produces == {"dest": 3, "tag": 32}
        assert str(source.point) == "/ring_stop[*]|stall0@1"
        (sink,) = graph.sinks
        assert str(sink.point) == "/ring_stop[*]|fifo2_out@1"
