"""Command-line surface: exit codes, printed verdicts, file artifacts."""

import csv
import xml.etree.ElementTree as ET

import pytest
from gmpy2 import mpq

from nestnet import (
    closure,
    eval_scalar,
    load_net,
    net_eval,
    net_to_f64,
    param_count,
    rat,
    save_net,
)
from nestnet.cli import CSV_COLUMNS, ResultRow, run, write_csv
from nestnet.constructive import floor_base
from nestnet.verify import BitCheckResult


class TestResultRow:
    """CSV row formatting keeps rationals exact and floats round-trippable."""

    def test_cells(self):
        row = ResultRow(experiment="demo", n=3, K=9, delta=mpq(1, 1 << 25),
                        params=100, bound=mpq(7, 9), sup_err=mpq(1, 9),
                        l2_err=0.25, wall_ms=17.36)
        cells = row.cells()
        assert cells[0] == "demo"
        assert cells[5] == "1/33554432"
        assert cells[7] == "7/9" and cells[8] == "1/9"
        assert cells[10] == "0.25"
        assert cells[12] == "17.4"
        assert cells[1] == "3" and cells[2] == ""  # absent fields left blank

    def test_nonnegative_guard(self):
        with pytest.raises(ValueError):
            ResultRow(experiment="demo", sup_err=mpq(-1, 9))

    def test_write_csv_header(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(str(path), [ResultRow(experiment="a", n=2)])
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[1][0] == "a"


class TestConstruct:
    """construct subcommands write loadable nets and print budgets."""

    def test_step(self, tmp_path, capsys):
        out = tmp_path / "step.json"
        code = run(["construct", "step", "--n", "2", "--r", "1",
                    "--delta", "1/8", "--J", "3", "--out", str(out)])
        assert code == 0
        assert ": ok" in capsys.readouterr().out
        net = load_net(str(out))
        assert eval_scalar(net, rat(5, 2)) == 2
        assert eval_scalar(net, rat(4)) == 3

    def test_approx_interior(self, tmp_path, capsys):
        out = tmp_path / "approx.json"
        code = run(["construct", "approx", "--target", "abs-shift:1/3",
                    "--n", "3", "--s", "1", "--chain", "interior",
                    "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "K=9" in text and ": ok" in text
        assert load_net(str(out)).input_dim == 1

    def test_decimal_rational_is_usage_error(self, capsys):
        code = run(["construct", "floor", "--n", "2", "--r", "2",
                    "--delta", "0.01"])
        assert code == 2

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 2

    def test_bad_builder_arguments(self, capsys):
        code = run(["construct", "step", "--n", "2", "--r", "1",
                    "--delta", "1/8", "--J", "5"])  # J beyond 2^(n^r)
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestVerify:
    """verify subcommands re-check builders case by case."""

    def test_bits(self, capsys):
        assert run(["verify", "bits", "--n", "2", "--s", "1"]) == 0
        assert "12/12 exact" in capsys.readouterr().out

    def test_bits_budget_exhausted(self, monkeypatch, capsys):
        monkeypatch.setenv("NESTNET_MAX_CASES", "10")
        assert run(["verify", "bits", "--n", "2", "--s", "2"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_bits_counterexample_is_failure(self, monkeypatch, capsys):
        import nestnet.cli as cli

        monkeypatch.setattr(
            cli, "exhaustive_bit_check",
            lambda n, s: BitCheckResult(False, 12, ((1, 0), 1, mpq(0), 1)))
        assert run(["verify", "bits", "--n", "2", "--s", "1"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_floor(self, capsys):
        code = run(["verify", "floor", "--n", "2", "--r", "2",
                    "--delta", "1/256", "--samples", "3"])
        assert code == 0
        assert "48/48 exact" in capsys.readouterr().out

    def test_floor_bad_delta(self, capsys):
        code = run(["verify", "floor", "--n", "2", "--r", "2",
                    "--delta", "1/64"])
        assert code == 2  # margin amplification reaches 1

    def test_pointfit(self, capsys):
        code = run(["verify", "pointfit", "--ys", "0,1/4,1/2",
                    "--eps", "1/4", "--n", "2", "--s", "1",
                    "--probes", "50"])
        assert code == 0
        out = capsys.readouterr().out
        assert "3/3 fit points exact" in out and "50 probes clamped" in out

    def test_bounds_interior(self, capsys):
        code = run(["verify", "bounds", "--target", "abs-shift:1/3",
                    "--n", "3", "--s", "1", "--points", "101",
                    "--chain", "interior"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count(": ok") == 2 and "FAIL" not in out

    def test_bounds_full_finite_p(self, capsys):
        code = run(["verify", "bounds", "--target", "abs-shift:1/3",
                    "--n", "3", "--s", "1", "--points", "101",
                    "--p", "2", "--chain", "full"])
        assert code == 0
        assert "full (p=2)" in capsys.readouterr().out


class TestScale:
    """scale emits schema-stable CSV and well-formed SVG."""

    def test_csv_and_svg(self, tmp_path, capsys):
        csv_path = tmp_path / "scale.csv"
        svg_path = tmp_path / "scale.svg"
        code = run(["scale", "--target", "abs-shift:1/3", "--s", "1",
                    "--n", "2,3", "--points", "101",
                    "--csv", str(csv_path), "--svg", str(svg_path)])
        assert code == 0
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [r[1] for r in rows[1:]] == ["2", "3"]
        sup = dict(zip(rows[0], rows[1]))["sup_err"]
        assert "/" in sup or sup.isdigit()  # exact rational, not a float
        root = ET.parse(svg_path).getroot()
        assert root.tag.endswith("svg")
        assert "slope" in capsys.readouterr().out


class TestTrainSpiral:
    """train-spiral runs the toy experiment end to end."""

    def test_single_kind(self, tmp_path, capsys):
        out = tmp_path / "net.json"
        code = run(["train-spiral", "--kind", "nested", "--width", "4",
                    "--epochs", "2", "--batch", "32", "--samples", "40",
                    "--test-samples", "20", "--seed", "1",
                    "--log-every", "1", "--out", str(out)])
        assert code == 0
        assert "final test accuracy" in capsys.readouterr().out
        net = load_net(str(out))
        assert net.input_dim == 2 and net.output_dim == 2

    def test_both_kinds_write_suffixed_files(self, tmp_path, capsys):
        out = tmp_path / "spiral.json"
        code = run(["train-spiral", "--kind", "both", "--width", "2",
                    "--epochs", "1", "--batch", "16", "--samples", "20",
                    "--test-samples", "10", "--out", str(out)])
        assert code == 0
        assert (tmp_path / "spiral-standard.json").exists()
        assert (tmp_path / "spiral-nested.json").exists()


class TestExport:
    """export re-encodes and optionally inlines shared sub-nets."""

    def test_expand_removes_registry(self, tmp_path, capsys):
        src = tmp_path / "floor.json"
        dst = tmp_path / "flat.json"
        net = floor_base(2, rat(1, 8))
        save_net(net, str(src))
        code = run(["export", "--in", str(src), "--out", str(dst),
                    "--expand"])
        assert code == 0
        flat = load_net(str(dst))
        assert not closure(flat)
        assert param_count(flat) >= param_count(net)
        for t in range(9):
            assert eval_scalar(flat, rat(t, 3)) == eval_scalar(net,
                                                               rat(t, 3))

    def test_rational_encoding_of_float_net_is_refused(self, tmp_path,
                                                       capsys):
        src = tmp_path / "f64.json"
        net = net_to_f64(floor_base(2, rat(1, 8)))
        save_net(net, str(src))
        code = run(["export", "--in", str(src), "--out",
                    str(tmp_path / "x.json"), "--encoding", "rational"])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        code = run(["export", "--in", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "x.json")])
        assert code == 2
