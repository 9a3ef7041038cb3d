import pytest

from tlflow.cli import compile_source
from tlflow.exceptions import (
    CombinationalCycleError,
    FlowError,
    StagingError,
)
from tlflow.frontend import ElementKind, PathElement
from tlflow.scope_graph import ScopePath
from tlflow.staging import (
    Netlist,
    Node,
    NodeKind,
    ProbeKind,
    check_acyclic,
    dump_netlist,
    instance_label,
)
from tlflow.utils import read_corpus


@pytest.fixture(scope="module")
def pythagoras():
    return compile_source(read_corpus("pythagoras.tlv"))


@pytest.fixture(scope="module")
def showcase():
    return compile_source(read_corpus("showcase.tlv"))


class TestPlanStages:
    def test_pythagoras_registers(self, pythagoras):
        plan = pythagoras.plan
        assert plan.registers("aa_sq") == 1
        assert plan.registers("bb_sq") == 1
        assert plan.registers("cc_sq") == 1
        assert plan.registers("aa") == 0
        assert plan.registers("cc") == 0

    def test_spans(self, pythagoras):
        (span,) = [s for s in pythagoras.plan.spans if s.field == "cc_sq"]
        assert (span.first, span.last) == (2, 3)

    def test_consumed_before_assigned(self):
        source = (
            "|p\n   @1\n      $y[4:0] = $x + 1;\n"
            "   @2\n      $x[3:0] = $u[3:0];\n"
        )
        with pytest.raises(StagingError, match="before it is") as info:
            compile_source(source)
        assert info.value.line == 3


class TestBuildNetlist:
    def test_pythagoras_netlist(self, pythagoras):
        netlist = pythagoras.netlist
        inputs = [netlist.nodes[i] for i in netlist.inputs]
        names = {node.name: node.width for node in inputs}
        assert names == {"calc_aa": 4, "calc_bb": 4}
        (output,) = netlist.outputs
        assert netlist.nodes[output].name == "calc_cc"
        assert netlist.nodes[output].width == 5
        assert netlist.count(NodeKind.REGISTER) == 3
        assert netlist.count(NodeKind.COMB, "pow") == 2
        assert netlist.count(NodeKind.COMB, "add") == 1
        assert netlist.count(NodeKind.COMB, "sqrt") == 1
        assert netlist.count(NodeKind.COMB) == 4
        assert not netlist.ports
        assert len(netlist.stimulus) == 2

    def test_schedule_is_topological(self, showcase):
        netlist = showcase.netlist
        position = {node_id: i for i, node_id in enumerate(netlist.schedule)}
        for node_id in netlist.schedule:
            for operand in netlist.nodes[node_id].operands:
                if operand in position:
                    assert position[operand] < position[node_id]
        evaluated = [
            n.id
            for n in netlist.nodes
            if n.kind in (NodeKind.COMB, NodeKind.OUTPUT)
        ]
        assert sorted(netlist.schedule) == evaluated

    def test_registers_have_drivers(self, showcase):
        netlist = showcase.netlist
        registers = [netlist.nodes[r] for r in netlist.registers]
        assert all(len(reg.operands) == 1 for reg in registers)

    def test_showcase_ports(self, showcase):
        netlist = showcase.netlist
        assert [p.stop for p in netlist.ports] == [0, 1, 2, 3]
        for port in netlist.ports:
            assert [name for name, _ in port.source_fields] == ["dest", "tag"]
            assert [name for name, _ in port.sink_fields] == ["tag"]
        valid = netlist.by_name("ring_stop_2_stall0_src_valid")
        assert valid.kind is NodeKind.INPUT
        assert netlist.by_name("ring_stop_3_fifo2_out_sink_tag").width == 32
        assert netlist.by_name("ring_stop_0_stall_stall").width == 1

    def test_showcase_probes(self, showcase):
        kinds = [p.kind for p in showcase.netlist.probes]
        assert kinds.count(ProbeKind.BYPASS_TAKEN) == 4
        assert kinds.count(ProbeKind.FORCED_ONTO_RING) == 4
        occupancy = [
            p for p in showcase.netlist.probes if p.kind is ProbeKind.OCCUPANCY
        ]
        assert occupancy
        assert {p.stop for p in occupancy} == {0, 1, 2, 3}

    def test_stimulus_fields_join_the_source(self):
        netlist = compile_source(read_corpus("showcase_placed.tlv")).netlist
        port = netlist.ports[0]
        assert [name for name, _ in port.source_fields] == [
            "aa",
            "bb",
            "dest",
            "tag",
        ]
        assert [name for name, _ in port.sink_fields] == [
            "aa_sq",
            "bb_sq",
            "cc",
            "cc_sq",
            "tag",
        ]
        assert not netlist.stimulus

    def test_ports_follow_replication(self):
        netlist = compile_source(read_corpus("showcase.tlv"), ports=3).netlist
        assert len(netlist.ports) == 3

    def test_corrupt_staging_adds_logic(self, pythagoras):
        mutated = compile_source(
            read_corpus("pythagoras.tlv"), mutations=("corrupt_staging:aa_sq",)
        )
        assert len(mutated.netlist) > len(pythagoras.netlist)
        assert mutated.netlist.count(NodeKind.COMB, "and") == 1

    def test_unknown_mutation(self):
        with pytest.raises(StagingError, match="unknown mutation"):
            compile_source(read_corpus("pythagoras.tlv"), mutations=("melt",))

    def test_variable_exponent_with_declared_width(self):
        source = "|p\n   @1\n      $x[7:0] = $a[3:0] ** $b[1:0];\n"
        with pytest.raises(FlowError, match="integer constant") as info:
            compile_source(source)
        assert info.value.line == 3


class TestCheckAcyclic:
    def test_cycle(self):
        netlist = Netlist(
            nodes=(
                Node(0, NodeKind.COMB, 1, "not", (1,), source="a"),
                Node(1, NodeKind.COMB, 1, "not", (0,), source="b"),
            )
        )
        with pytest.raises(CombinationalCycleError) as info:
            check_acyclic(netlist)
        assert set(info.value.names) == {"a", "b"}

    def test_registers_break_cycles(self):
        netlist = Netlist(
            nodes=(
                Node(0, NodeKind.REGISTER, 1, operands=(1,)),
                Node(1, NodeKind.COMB, 1, "not", (0,)),
            ),
            registers=(0,),
        )
        assert check_acyclic(netlist) == [1]


class TestNaming:
    def test_instance_label(self):
        path = ScopePath(
            (
                PathElement(ElementKind.HIER_REPLICATED, "ring_stop"),
                PathElement(ElementKind.PIPELINE, "bp0"),
            )
        )
        assert instance_label(path, (2,)) == "ring_stop_2_bp0"
        label = instance_label(path, (1,), ("trans",))
        assert label == "ring_stop_1_bp0_trans"

    def test_dump_netlist(self, pythagoras):
        text = dump_netlist(pythagoras.netlist)
        assert "comb:pow(2) 8" in text
        assert "comb:sqrt 5" in text
        again = compile_source(read_corpus("pythagoras.tlv")).netlist
        assert text == dump_netlist(again)
