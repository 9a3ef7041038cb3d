import io
import math

import pytest

from tlflow.cli import compile_source
from tlflow.exceptions import (
    ConfigError,
    DrainTimeoutError,
    InterfaceMismatchError,
    SimulationError,
)
from tlflow.simulator import (
    StimulusConfig,
    _compile,
    check_equivalence,
    format_transaction_log,
    initial_state,
    peek,
    run,
    step,
    write_vcd,
)
from tlflow.test.test_flow_resolver import ANY_MUX
from tlflow.utils import read_corpus


def _netlist(name, **kwargs):
    return compile_source(read_corpus(name), **kwargs).netlist


@pytest.fixture(scope="module")
def pythagoras():
    return _netlist("pythagoras.tlv")


@pytest.fixture(scope="module")
def showcase():
    return _netlist("showcase.tlv")


@pytest.fixture(scope="module")
def placed():
    return _netlist("showcase_placed.tlv")


class TestStep:
    def test_pythagoras_exhaustive(self, pythagoras):
        for aa in range(16):
            for bb in range(16):
                state = initial_state(pythagoras)
                state = step(state, pythagoras, {"calc_aa": aa, "calc_bb": bb})
                state = step(step(state, pythagoras), pythagoras)
                assert peek(state, pythagoras, "calc_cc") == math.isqrt(
                    aa * aa + bb * bb
                ), (aa, bb)

    def test_latency(self, pythagoras):
        state = initial_state(pythagoras)
        state = step(state, pythagoras, {"calc_aa": 3, "calc_bb": 4})
        state = step(state, pythagoras, {"calc_aa": 0, "calc_bb": 0})
        assert peek(state, pythagoras, "calc_cc") == 0
        state = step(state, pythagoras)
        assert peek(state, pythagoras, "calc_cc") == 5
        state = step(state, pythagoras)
        assert peek(state, pythagoras, "calc_cc") == 0
        assert state.cycle == 4

    def test_inputs_are_masked(self, pythagoras):
        state = initial_state(pythagoras)
        state = step(state, pythagoras, {"calc_aa": 19, "calc_bb": 0})
        state = step(step(state, pythagoras), pythagoras)
        assert peek(state, pythagoras, "calc_cc") == 3

    def test_compiled_matches_interpreted(self, showcase):
        compiled = _compile(showcase)
        state = initial_state(showcase)
        values = list(state.values)
        drive = {
            "ring_stop_1_stall0_src_valid": 1,
            "ring_stop_1_stall0_src_dest": 3,
            "ring_stop_1_stall0_src_tag": 7,
            "ring_stop_3_fifo2_out_sink_ready": 1,
        }
        for cycle in range(12):
            inputs = drive if cycle < 2 else {}
            for name, value in inputs.items():
                values[showcase.by_name(name).id] = value
            compiled.evaluate(values)
            compiled.commit(values)
            state = step(state, showcase, inputs)
            assert values == state.values, cycle

    def test_any_mux(self):
        netlist = compile_source(ANY_MUX).netlist
        state = initial_state(netlist)
        state = step(state, netlist, {"p_ctl_s": 1, "p_a_u": 9})
        state = step(state, netlist)
        assert peek(state, netlist, "p_y") == 10
        state = step(state, netlist, {"p_ctl_s": 0})
        state = step(state, netlist)
        assert peek(state, netlist, "p_y") == 6

    def test_default_zero(self):
        source = "|p\n   @1\n      $y[4:0] = $x + 1;\n"
        netlist = compile_source(source, field_defaults=("x",)).netlist
        state = step(initial_state(netlist), netlist)
        assert peek(state, netlist, "p_y") == 1
        assert not netlist.stimulus

    def test_corrupted_staging(self):
        netlist = _netlist(
            "pythagoras.tlv", mutations=("corrupt_staging:aa_sq",)
        )
        state = initial_state(netlist)
        state = step(state, netlist, {"calc_aa": 3, "calc_bb": 0})
        state = step(step(state, netlist), netlist)
        assert peek(state, netlist, "calc_cc") == 2

    @pytest.mark.parametrize(
        "name, error",
        [
            ("calc_dd", "no input named"),
            ("calc_cc", "is an output"),
        ],
    )
    def test_bad_input(self, pythagoras, name, error):
        with pytest.raises(SimulationError, match=error):
            step(initial_state(pythagoras), pythagoras, {name: 1})


class TestRun:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    @pytest.mark.parametrize("backpressure", [0.0, 0.3])
    def test_showcase_checks_pass(self, showcase, seed, backpressure):
        config = StimulusConfig(0.3, backpressure)
        result = run(showcase, 150, seed, config)
        assert result.check.ok, result.check
        counters = result.counters
        assert counters["injected"].sum() == counters["delivered"].sum() > 0
        assert result.transactions["deliveries"].eq(1).all()
        result.raise_for_failure()

    def test_local_traffic_is_steered(self, showcase):
        result = run(showcase, 200, 5, StimulusConfig(0.5, 0.2))
        df = result.transactions
        local = df[df["src"] == df["dest"]].groupby("src").size()
        counters = result.counters.set_index("stop")
        steered = counters["bypass_taken"] + counters["forced_onto_ring"]
        for stop, count in local.items():
            assert steered[stop] == count

    def test_payload_oracle(self, placed):
        result = run(placed, 150, 4, StimulusConfig(0.4, 0.2))
        assert result.check.ok, result.check
        for record in result.records:
            _, _, fields = record.deliveries[0]
            aa, bb = record.fields["aa"], record.fields["bb"]
            assert fields["aa_sq"] == aa * aa
            assert fields["cc"] == math.isqrt(aa * aa + bb * bb)

    def test_deterministic(self, showcase):
        config = StimulusConfig(0.4, 0.3)
        first = run(showcase, 100, 9, config)
        second = run(showcase, 100, 9, config)
        assert first.transactions.equals(second.transactions)
        assert first.counters.equals(second.counters)
        assert first.cycles == second.cycles
        other = run(showcase, 100, 10, config)
        assert not first.transactions.equals(other.transactions)

    def test_free_design(self, pythagoras):
        result = run(pythagoras, 20, 1, StimulusConfig(trace=True))
        assert result.check.ok
        assert result.cycles == 20
        assert result.transactions.empty
        assert len(result.trace) == 20
        assert "calc_cc" in result.trace_names

    def test_zero_cycles(self, showcase):
        result = run(showcase, 0)
        assert result.cycles == 0
        assert result.check.ok
        assert list(result.counters["injected"]) == [0, 0, 0, 0]

    def test_negative_cycles(self, showcase):
        with pytest.raises(SimulationError, match="non-negative"):
            run(showcase, -1)

    def test_drain_timeout(self, showcase):
        config = StimulusConfig(1.0, 0.0, drain_timeout=0)
        result = run(showcase, 10, 1, config)
        assert not result.check.drained
        assert result.check.stuck
        with pytest.raises(DrainTimeoutError, match="within 0 cycles"):
            result.raise_for_failure()

    @pytest.mark.slow
    @pytest.mark.parametrize("ports", [2, 4, 8])
    def test_long_runs(self, ports):
        netlist = _netlist("showcase_placed.tlv", ports=ports)
        result = run(netlist, 2000, 11, StimulusConfig(0.3, 0.3))
        assert result.check.ok, result.check


class TestMutations:
    def test_invert_dest_compare(self):
        netlist = _netlist("showcase.tlv", mutations=("invert_dest_compare",))
        result = run(netlist, 150, 1, StimulusConfig(0.3, 0.0))
        assert not result.check.ok
        with pytest.raises(SimulationError):
            result.raise_for_failure()

    def test_corrupt_tag(self):
        netlist = _netlist("showcase.tlv", mutations=("corrupt_staging:tag",))
        result = run(netlist, 150, 1, StimulusConfig(0.3, 0.0))
        assert not result.check.ok

    def test_swap_arb2_priority(self, showcase):
        # Ring traffic wins arb2 by default, so a saturated bypass backs up
        # and local traffic is forced onto the ring; swapping relieves it.
        netlist = _netlist("showcase.tlv", mutations=("swap_arb2_priority",))
        config = StimulusConfig(1.0, 0.0)
        baseline = run(showcase, 600, 2, config)
        mutated = run(netlist, 600, 2, config)
        forced = baseline.counters["forced_onto_ring"].sum()
        assert forced > 0
        assert mutated.counters["forced_onto_ring"].sum() < forced


class TestStimulusConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"injection_probability": -0.1},
            {"injection_probability": 1.5},
            {"backpressure_probability": 2},
            {"drain_timeout": -1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            StimulusConfig(**kwargs)


class TestEquivalence:
    def test_placement_is_invisible(self, placed):
        early = _netlist("showcase_early.tlv")
        verdict = check_equivalence(placed, early, 150, 3)
        assert verdict.equivalent, verdict.first
        assert verdict.compared > 0

    def test_free_design_with_itself(self, pythagoras):
        other = _netlist("pythagoras.tlv")
        verdict = check_equivalence(pythagoras, other, 30, 1)
        assert verdict.equivalent
        assert verdict.compared == 30

    def test_mutation_diverges(self, showcase):
        netlist = _netlist("showcase.tlv", mutations=("invert_dest_compare",))
        verdict = check_equivalence(showcase, netlist, 150, 1)
        assert not verdict.equivalent
        assert verdict.first.startswith("tag ")

    def test_interface_mismatch(self, showcase, pythagoras, placed):
        with pytest.raises(InterfaceMismatchError):
            check_equivalence(showcase, pythagoras, 10)
        with pytest.raises(InterfaceMismatchError):
            check_equivalence(showcase, placed, 10)


class TestOutput:
    def test_transaction_log(self, showcase):
        result = run(showcase, 40, 1, StimulusConfig(0.5, 0.0))
        log = format_transaction_log(result.records)
        lines = log.splitlines()
        assert len(lines) == len(result.records) > 0
        first = result.records[0]
        assert lines[0].startswith(
            f"0 {first.src} {first.dest} {first.inject_cycle} "
            f"{first.deliveries[0][0]}"
        )
        assert format_transaction_log([]) == ""

    def test_vcd(self, pythagoras):
        result = run(pythagoras, 5, 1, StimulusConfig(trace=True))
        stream = io.StringIO()
        write_vcd(stream, result, "pythagoras")
        text = stream.getvalue()
        assert "$scope module pythagoras $end" in text
        assert "$var wire 5 " in text
        assert " calc_cc $end" in text
        assert "$dumpvars" in text
        assert text.endswith("#5\n")

    def test_vcd_needs_trace(self, pythagoras):
        with pytest.raises(SimulationError, match="not traced"):
            write_vcd(io.StringIO(), run(pythagoras, 5))


def _assert_delivered_once(result):
    assert result.check.ok, result.check.violations[:5]
    assert result.check.conservation_violations == 0
    df = result.transactions
    assert len(df) > 0
    assert (df["deliveries"] == 1).all()
    assert (df["deliver_port"] == df["dest"]).all()


@pytest.mark.slow
class TestAcceptanceRuns:
    def test_showcase_default_run(self, showcase):
        result = run(showcase, 10000, 1, StimulusConfig(0.5, 0.0))
        _assert_delivered_once(result)

    @pytest.mark.parametrize("backpressure", [0.0, 0.3])
    @pytest.mark.parametrize("seed", range(1, 21))
    def test_ring_delivery(self, showcase, seed, backpressure):
        result = run(showcase, 10000, seed, StimulusConfig(0.5, backpressure))
        _assert_delivered_once(result)

    @pytest.mark.parametrize("seed", range(1, 6))
    def test_placement_is_invisible(self, placed, seed):
        early = _netlist("showcase_early.tlv")
        verdict = check_equivalence(placed, early, 10000, seed)
        assert verdict.equivalent, verdict.first
        assert verdict.compared > 0

    @pytest.mark.parametrize(
        "mutation", ["invert_dest_compare", "corrupt_staging:tag"]
    )
    def test_mutation_fails_a_run(self, mutation):
        netlist = _netlist("showcase.tlv", mutations=(mutation,))
        result = run(netlist, 10000, 1, StimulusConfig(0.5, 0.0))
        assert not result.check.ok

    def test_swapped_priority_forces_less(self, showcase):
        netlist = _netlist("showcase.tlv", mutations=("swap_arb2_priority",))
        config = StimulusConfig(0.5, 0.0)
        baseline = run(showcase, 10000, 1, config)
        mutated = run(netlist, 10000, 1, config)
        _assert_delivered_once(mutated)
        assert (
            mutated.counters["forced_onto_ring"].sum()
            < baseline.counters["forced_onto_ring"].sum()
        )
