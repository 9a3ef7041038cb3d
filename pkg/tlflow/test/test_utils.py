import pytest

from tlflow import utils
from tlflow.config import CONFIG
from tlflow.exceptions import ConfigError
from tlflow.frontend import parse_source


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# simulation settings\n"
        "cycles = 250\n"
        "injection_probability=0.25\n"
        "\n"
        "mutations = swap_arb2_priority, invert_dest_compare\n",
        encoding="utf-8",
    )
    return path


class TestClog2:
    @pytest.mark.parametrize(
        ("n", "expected"), [(1, 1), (2, 1), (3, 2), (4, 2), (5, 3), (16, 4)]
    )
    def test_clog2(self, n, expected):
        assert utils.clog2(n) == expected

    def test_clog2_failure(self):
        with pytest.raises(AssertionError):
            utils.clog2(0)


class TestOperatorWidth:
    @pytest.mark.parametrize(
        ("op", "widths", "exponent", "expected"),
        [
            ("+", [8, 8], None, 9),
            ("*", [4, 3], None, 7),
            ("**", [4], 2, 8),
            ("sqrt", [9], None, 5),
            ("sqrt", [8], None, 4),
            ("==", [5, 7], None, 1),
            ("&", [3, 6], None, 6),
            ("~", [6], None, 6),
        ],
    )
    def test_operator_width(self, op, widths, exponent, expected):
        assert utils.operator_width(op, widths, exponent) == expected

    def test_expression_width(self):
        tree = parse_source(
            "|p\n   @1\n      $x = sqrt($a[3:0] ** 2 + $b[3:0] ** 2);\n"
        )
        rhs = tree.root[0].children[0].children[0].rhs
        assert utils.expression_width(rhs, lambda ref: 1) == 5


class TestSanitizeIdentifier:
    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("/ring_stop[2]|bp0", "ring_stop_2_bp0"),
            ("|calc@1->@2 $aa_sq", "calc_1_2_aa_sq"),
            ("3x", "n3x"),
            ("", "n"),
        ],
    )
    def test_sanitize_identifier(self, text, expected):
        assert utils.sanitize_identifier(text) == expected


class TestCountCodeChars:
    def test_line_comments(self):
        assert utils.count_code_chars("$a = 1; // note\n  $b = 2;") == 10

    def test_block_comments(self):
        text = "wire a; /* a\n long note */ wire b;"
        assert utils.count_code_chars(text, block_comments=True) == 12


class TestReadConfigFile:
    def test_values_take_config_types(self, config_file):
        settings = utils.read_config_file(config_file)
        assert settings == {
            "cycles": 250,
            "injection_probability": 0.25,
            "mutations": ("swap_arb2_priority", "invert_dest_compare"),
        }
        assert "seed" not in settings

    @pytest.mark.parametrize(
        "text", ["colour = red\n", "cycles = many\n", "cycles 10\n"]
    )
    def test_read_config_file_failure(self, tmp_path, text):
        path = tmp_path / "bad.cfg"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            utils.read_config_file(path)
        assert info.value.line in (1, None)

    def test_every_default_has_a_type(self):
        assert all(value is not None for value in CONFIG.values())


class TestCorpus:
    @pytest.mark.parametrize(
        "name",
        [
            "pythagoras.tlv",
            "showcase.tlv",
            "showcase_placed.tlv",
            "showcase_early.tlv",
        ],
    )
    def test_corpus_is_bundled(self, name):
        assert utils.corpus_path(name).is_file()
        assert utils.read_corpus(name).strip()
