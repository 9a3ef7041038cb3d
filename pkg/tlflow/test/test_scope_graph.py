import pytest

from tlflow.exceptions import (
    ArityMismatchError,
    ElaborationError,
    ReferenceResolutionError,
    UnknownComponentError,
    UnresolvedFieldError,
)
from tlflow.frontend import parse_source
from tlflow.scope_graph import (
    BindingKind,
    ScopePath,
    dump_scope_graph,
    expand_instantiations,
    merge_reentrant,
    resolve_references,
)
from tlflow.utils import read_corpus


def _merge(source, ports=4):
    return merge_reentrant(parse_source(source), ports)


def _resolve(source, ports=4):
    return resolve_references(expand_instantiations(_merge(source, ports)))


@pytest.fixture
def showcase_graph():
    return _resolve(read_corpus("showcase_placed.tlv"))


class TestMergeReentrant:
    def test_fuses_equal_paths_in_source_order(self):
        graph = _merge(
            "|p\n   @1\n      $x = 1;\n"
            "/s[*]\n   |q\n      @1\n         $z = 3;\n"
            "|p\n   @1\n      $y = 2;\n"
        )
        (path, node), _ = list(graph.pipelines())
        assert str(path) == "|p"
        names = [p.statement.lhs.name for p in node.stages[1].statements]
        assert names == ["x", "y"]

    def test_replication_count(self):
        graph = _merge("/s[*]\n   |q\n      @1\n         $z = 3;\n", ports=6)
        assert graph.replication == {"s": 6}

    def test_transaction_scopes_recorded(self):
        graph = _merge(read_corpus("showcase_placed.tlv"))
        stall1 = [n for p, n in graph.pipelines() if p.pipeline == "stall1"]
        (placed, _) = stall1[0].stages[2].statements
        assert placed.trans == ("trans",)

    @pytest.mark.parametrize(
        ("source", "message"),
        [
            (
                "|p\n   @1\n      $x = 1;\n|p\n   @1\n      $x = 2;\n",
                "duplicate assignment",
            ),
            (
                "/s\n   |p\n      @1\n         $x = 1;\n"
                "/s[*]\n   |p\n      @1\n         $y = 1;\n",
                "conflicting replication markers",
            ),
            (
                "/s[*]\n   /s[*]\n      |p\n         @1\n"
                "            $x = 1;\n",
                "already defined",
            ),
        ],
    )
    def test_merge_reentrant_failure(self, source, message):
        with pytest.raises(ElaborationError, match=message):
            _merge(source)


class TestExpandInstantiations:
    def test_does_not_modify_its_input(self):
        merged = _merge(read_corpus("showcase.tlv"))
        expanded = expand_instantiations(merged)
        assert merged.instantiations and not merged.components
        assert expanded.expanded and not expanded.instantiations

    def test_showcase_components(self, showcase_graph):
        templates = [c.template for c in showcase_graph.components]
        assert templates == [
            "router_testbench",
            "stall_pipeline",
            "simple_bypass_fifo",
            "bp_pipeline",
            "opportunistic_flow",
            "simple_ring",
            "arb2",
            "simple_bypass_fifo",
        ]
        assert len(showcase_graph.sources) == len(showcase_graph.sinks) == 1

    def test_user_logic_lands_in_component_pipeline(self, showcase_graph):
        bp1 = [n for p, n in showcase_graph.pipelines() if p.pipeline == "bp1"]
        assert bp1[0].entry_stage == 1 and bp1[0].exit_stage == 2
        (placed,) = bp1[0].stages[1].statements
        assert placed.statement.lhs.name == "cc_sq"

    @pytest.mark.parametrize(
        ("source", "error"),
        [
            ("/s[*]\n   m4+nope(/s)\n", UnknownComponentError),
            ("/s[*]\n   m4+arb2(/s)\n", ArityMismatchError),
            (
                "/s[*]\n   m4+bp_pipeline(/s, |bp, @0, 3, /trans)\n",
                ElaborationError,
            ),
            (
                "/s[*]\n   m4+bp_pipeline(/nowhere, |bp, 0, 3, /trans)\n",
                ElaborationError,
            ),
        ],
    )
    def test_expand_instantiations_failure(self, source, error):
        with pytest.raises(error):
            expand_instantiations(_merge(source))

    def test_unknown_component_lists_library(self):
        with pytest.raises(UnknownComponentError) as info:
            expand_instantiations(_merge("/s[*]\n   m4+nope(/s)\n"))
        assert "simple_ring" in str(info.value)
        assert info.value.line == 2

    def test_logic_outside_flow_bounds(self):
        source = read_corpus("showcase.tlv") + (
            "/ring_stop[*]\n   |stall1\n      @3\n         /trans\n"
            "            $z = 1;\n"
        )
        with pytest.raises(ElaborationError, match="follows the flow exit"):
            expand_instantiations(_merge(source))


class TestResolveReferences:
    def test_bindings(self, showcase_graph):
        kinds = {(b.name, b.kind) for b in showcase_graph.bindings}
        assert ("ring_stop", BindingKind.INDEX) in kinds
        assert ("dest", BindingKind.DEMAND) in kinds
        assert ("aa_sq", BindingKind.DEMAND) in kinds
        assert ("remote", BindingKind.LOCAL) in kinds

    def test_local_back_reference_distance(self):
        graph = _resolve(
            "|p\n   @1\n      $x[3:0] = $u[3:0];\n   @3\n      $y = $x;\n"
        )
        (binding,) = [b for b in graph.bindings if b.name == "x"]
        assert binding.kind is BindingKind.LOCAL
        assert binding.distance == 2

    def test_index_range(self, showcase_graph):
        index = [
            b
            for b in showcase_graph.bindings
            if b.kind is BindingKind.INDEX
        ]
        assert index and all(b.value_range == 4 for b in index)

    @pytest.mark.parametrize(
        ("source", "error"),
        [
            ("|p\n   @1\n      $x = #s;\n", ReferenceResolutionError),
            ("|p\n   @1\n      $x = /in$y;\n", ReferenceResolutionError),
            ("|p\n   @1\n      $x = $nothing;\n", UnresolvedFieldError),
        ],
    )
    def test_resolve_references_failure(self, source, error):
        with pytest.raises(error) as info:
            _resolve(source)
        assert info.value.line == 3


class TestDumpScopeGraph:
    def test_stable(self):
        first = dump_scope_graph(_resolve(read_corpus("showcase.tlv")))
        second = dump_scope_graph(_resolve(read_corpus("showcase.tlv")))
        assert first == second

    def test_content(self, showcase_graph):
        text = dump_scope_graph(showcase_graph)
        assert "/ring_stop[*] x4 #ring_stop" in text
        assert (
            "component 0 router_testbench(/top, /ring_stop, |stall0, @1, "
            "|fifo2_out, @1) in /top" in text
        )
        assert "|ring_out entry=@1 exit=@4" in text
        assert "stall=stall_stall" in text

    def test_scope_path(self):
        assert str(ScopePath()) == ""
        assert ScopePath().pipeline is None
