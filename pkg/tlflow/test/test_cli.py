import logging

import pytest

from tlflow.cli import (
    build_parser,
    compile_file,
    compile_source,
    main,
    run_config,
)
from tlflow.exceptions import ConfigError, TlvSyntaxError
from tlflow.utils import corpus_path, read_corpus

BROKEN = "|calc\n   @1\n      $x[3:0] = $a[3:0]\n"


@pytest.fixture
def broken(tmp_path):
    path = tmp_path / "broken.tlv"
    path.write_text(BROKEN, encoding="utf-8")
    return str(path)


def _corpus(name):
    return str(corpus_path(name))


class TestCompileSource:
    @pytest.mark.parametrize(
        "kwargs, error",
        [
            ({"ports": 0}, "ports must be at least 1"),
            ({"arb2_priority": "in3"}, "arb2_priority must be in1 or in2"),
        ],
    )
    def test_invalid_options(self, kwargs, error):
        with pytest.raises(ConfigError, match=error):
            compile_source(read_corpus("pythagoras.tlv"), **kwargs)

    def test_intermediate_forms(self):
        design = compile_source(read_corpus("showcase.tlv"))
        assert design.graph.resolved
        assert design.flow.resolved
        assert design.plan.spans
        assert len(design.netlist.ports) == 4
        assert "/ring_stop[*] x4 #ring_stop" in design.expanded

    def test_compile_file_sets_path(self, broken):
        with pytest.raises(TlvSyntaxError) as info:
            compile_file(broken)
        assert info.value.path == broken
        assert info.value.location(broken).startswith(f"{broken}:3:")

    def test_progress_is_logged_once(self, caplog):
        caplog.set_level(logging.INFO)
        compile_source(read_corpus("showcase.tlv"))
        expanding = [
            r for r in caplog.records if r.getMessage().startswith("Expanding")
        ]
        assert len(expanding) == 1


class TestRunConfig:
    def test_defaults(self):
        args = build_parser().parse_args(["sim", "design.tlv"])
        config = run_config(args)
        assert config.inputs == ["design.tlv"]
        assert config.settings["ports"] == 4
        assert config.settings["mutations"] == ()
        assert config.display_mode == "pretty"

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# overrides\nports = 3\ncycles = 50\nseed = 8\n", encoding="utf-8"
        )
        args = build_parser().parse_args(
            [
                "sim",
                "design.tlv",
                "--config",
                str(path),
                "--cycles",
                "7",
                "--mutation",
                "invert_dest_compare",
                "--random-backpressure",
                "0.25",
            ]
        )
        config = run_config(args)
        assert config.settings["ports"] == 3
        assert config.settings["cycles"] == 7
        assert config.settings["seed"] == 8
        assert config.settings["mutations"] == ("invert_dest_compare",)
        stimulus = config.stimulus()
        assert stimulus.backpressure_probability == 0.25
        assert not stimulus.trace

    def test_equiv_takes_two_inputs(self):
        args = build_parser().parse_args(["equiv", "a.tlv", "b.tlv"])
        assert run_config(args).inputs == ["a.tlv", "b.tlv"]

    def test_bad_config_file(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text("colour = red\n", encoding="utf-8")
        args = ["sim", _corpus("pythagoras.tlv"), "--config", str(path)]
        assert main(args) == 1
        err = capsys.readouterr().err
        assert err.startswith(f"{path}:1: error: unknown configuration key")


class TestMain:
    def test_compile(self, tmp_path, capsys):
        out = tmp_path / "pythagoras.v"
        args = ["compile", _corpus("pythagoras.tlv"), "-o", str(out)]
        assert main(args) == 0
        text = out.read_text(encoding="utf-8")
        assert text.startswith("module pythagoras (")
        assert "sqrt" in capsys.readouterr().out

    def test_compile_module_name(self, capsys):
        args = ["compile", _corpus("pythagoras.tlv"), "--module-name", "calc"]
        assert main(args) == 0
        assert capsys.readouterr().out.startswith("module calc (")

    @pytest.mark.parametrize(
        "command, expected",
        [
            ("dump-scopes", "|calc"),
            ("dump-flow", "$cc_sq"),
            ("dump-netlist", "comb:sqrt"),
            ("metrics", "verilog_over_source="),
        ],
    )
    def test_dumps(self, capsys, command, expected):
        assert main([command, _corpus("pythagoras.tlv"), "--quiet"]) == 0
        assert expected in capsys.readouterr().out

    def test_diagnostic(self, broken, capsys):
        assert main(["compile", broken]) == 1
        err = capsys.readouterr().err
        assert err.startswith(f"{broken}:3:")
        assert ": error: " in err

    def test_missing_file(self, tmp_path, capsys):
        absent = tmp_path / "absent.tlv"
        assert main(["compile", str(absent)]) == 1
        assert capsys.readouterr().err == f"{absent}: error: no such file\n"

    def test_missing_config_file(self, tmp_path, capsys):
        absent = tmp_path / "absent.cfg"
        args = ["sim", _corpus("pythagoras.tlv"), "--config", str(absent)]
        assert main(args) == 1
        assert capsys.readouterr().err.startswith(f"{absent}: error: ")

    def test_components(self, capsys):
        assert main(["components", "-d", "plain"]) == 0
        out = capsys.readouterr().out
        assert "simple_bypass_fifo_v2" in out
        assert "Fixed-priority two-input arbiter." in out

    def test_sim(self, tmp_path, capsys):
        log, vcd = tmp_path / "run.log", tmp_path / "run.vcd"
        args = [
            "sim",
            _corpus("showcase.tlv"),
            "--cycles",
            "60",
            "-p",
            "0.3",
            "--log",
            str(log),
            "--vcd",
            str(vcd),
            "-d",
            "plain",
        ]
        assert main(args) == 0
        assert "delivered" in capsys.readouterr().out
        assert log.read_text(encoding="utf-8").count("\n") > 0
        assert "$enddefinitions $end" in vcd.read_text(encoding="utf-8")

    def test_sim_failure(self, capsys):
        args = [
            "sim",
            _corpus("showcase.tlv"),
            "--cycles",
            "100",
            "-p",
            "0.3",
            "--mutation",
            "invert_dest_compare",
        ]
        assert main(args) == 2
        assert ": error: " in capsys.readouterr().err

    def test_equiv(self, capsys):
        args = [
            "equiv",
            _corpus("showcase_placed.tlv"),
            _corpus("showcase_early.tlv"),
            "--cycles",
            "80",
        ]
        assert main(args) == 0
        assert capsys.readouterr().out.startswith("equivalent")

    def test_equiv_interface_mismatch(self, capsys):
        args = [
            "equiv",
            _corpus("showcase.tlv"),
            _corpus("pythagoras.tlv"),
            "--cycles",
            "10",
        ]
        assert main(args) == 2
        assert "different testbench fields" in capsys.readouterr().err
