import csv
import io
import math
import subprocess
import sys

import pytest

from mlpovm.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAILED, UsageError, main, parse_sweep

FOUR_PI = 4 * math.pi


def run(argv, tmp_path, name="out.csv"):
    path = tmp_path / name
    code = main([*argv, "--out", str(path)])
    return code, path.read_text(encoding="utf-8") if path.exists() else ""


def parse(text):
    lines = text.splitlines()
    assert lines[0].startswith("# mlpovm ")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    return list(reader)


class TestSweep:
    def test_inclusive(self):
        assert parse_sweep("0:1:0.25").tolist() == [0, 0.25, 0.5, 0.75, 1.0]
        assert parse_sweep("0:30:0.5")[-1] == 30.0
        assert len(parse_sweep("2:2:1")) == 1

    @pytest.mark.parametrize("spec", ["1:0:1", "0:1:0", "0:1", "a:b:c", "-1:2:1", "0:5:-1"])
    def test_rejects(self, spec):
        with pytest.raises(UsageError):
            parse_sweep(spec)


class TestLikelihood:
    def test_rows(self, tmp_path):
        code, text = run(["likelihood", "--sweep", "0:4:1", "--u-sweep", "0:1:0.1"], tmp_path)
        assert code == EXIT_OK
        rows = parse(text)
        assert list(rows[0]) == ["nbar", "fidelity_u", "likelihood"]
        assert len(rows) == 5 * 11
        table = {(float(r["nbar"]), float(r["fidelity_u"])): float(r["likelihood"]) for r in rows}
        assert table[(0.0, 0.3)] == pytest.approx(1 / FOUR_PI, rel=1e-14)
        assert table[(2.0, 1.0)] == pytest.approx(3 / FOUR_PI, rel=1e-14)
        for nbar in (1.0, 2.0, 3.0, 4.0):
            vals = [table[(nbar, u / 10)] for u in range(11)]
            assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_bad_sweep(self, tmp_path, capsys):
        code, _ = run(["likelihood", "--sweep", "5:1:1"], tmp_path)
        assert code == EXIT_USAGE
        assert "bad sweep" in capsys.readouterr().err

    def test_custom(self, tmp_path):
        weights = tmp_path / "w.txt"
        weights.write_text("1\n1\n")
        code, text = run(["likelihood", "--dist", f"custom:{weights}", "--u-sweep", "1:1:1"], tmp_path)
        assert code == EXIT_OK
        (row,) = parse(text)
        assert float(row["likelihood"]) == pytest.approx(1.5 / FOUR_PI)

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["likelihood", "--bogus"])
        assert exc.value.code == EXIT_USAGE


class TestFigures:
    def test_fig2_exact_columns(self, tmp_path):
        code, text = run(["fig2", "--trials", "0", "--sweep", "0:30:0.5"], tmp_path)
        assert code == EXIT_OK
        rows = parse(text)
        vac = rows[0]
        for s in ("N", "Poi", "th"):
            assert float(vac[f"Q_{s}"]) == pytest.approx(0.095, abs=1e-3)
            assert vac[f"Q_{s}_g"] == ""
        for r in rows:
            nbar = float(r["nbar"])
            assert (r["Q_N"] == "") == (not nbar.is_integer())
            if nbar >= 1:
                assert float(r["Q_th"]) < float(r["Q_Poi"])
                if r["Q_N"]:
                    assert abs(float(r["Q_N"]) - float(r["Q_Poi"])) < 0.02

    def test_fig3_values(self, tmp_path):
        _, text = run(["fig3", "--trials", "0", "--sweep", "0:2:1"], tmp_path)
        rows = {float(r["nbar"]): r for r in parse(text)}
        assert float(rows[1.0]["F_N"]) == pytest.approx(2 / 3, abs=1e-15)
        assert float(rows[1.0]["F_th"]) == pytest.approx(0.61371, abs=1e-5)
        assert float(rows[0.0]["F_Poi"]) == 0.5

    def test_fig4_bands_uncapped(self, tmp_path):
        _, text = run(["fig4", "--trials", "40", "--sweep", "0:1:1"], tmp_path)
        rows = parse(text)
        vac = rows[0]
        assert float(vac["std_N"]) == pytest.approx(math.sqrt(1 / 12))
        assert float(vac["F_N_hi"]) == pytest.approx(0.5 + math.sqrt(1 / 12))
        for r in rows:
            for s in ("N", "Poi", "th"):
                f, sd = float(r[f"F_{s}_g"]), float(r[f"std_{s}_g"])
                assert float(r[f"F_{s}_g_hi"]) == pytest.approx(f + sd)

    def test_fig4_band_can_exceed_one(self, tmp_path):
        _, text = run(["fig4", "--trials", "0", "--sweep", "30:30:1"], tmp_path)
        (row,) = parse(text)
        assert float(row["F_th_hi"]) > 1.0
        assert float(row["F_th_hi"]) == pytest.approx(float(row["F_th"]) + float(row["std_th"]))

    def test_greedy_columns(self, tmp_path):
        _, text = run(["fig3", "--trials", "200", "--sweep", "1:1:1", "--seed", "3"], tmp_path)
        (row,) = parse(text)
        assert abs(float(row["F_N_g"]) - 2 / 3) <= 4 * float(row["F_N_g_se"])

    def test_comment_records_config(self, tmp_path):
        _, text = run(["fig2", "--trials", "0", "--sweep", "0:1:1", "--seed", "42"], tmp_path)
        first = text.splitlines()[0]
        assert "fig2" in first and "seed=42" in first and "trials=0" in first and "sweep='0:1:1'" in first
        assert "\r" not in text


class TestDeterminism:
    @pytest.mark.parametrize("cmd", ["fig2", "fig3", "fig4"])
    def test_byte_identical_across_runs_and_workers(self, cmd, tmp_path):
        args = [cmd, "--trials", "60", "--sweep", "0:2:1", "--seed", "11"]
        _, a = run(args, tmp_path, "a.csv")
        _, b = run(args, tmp_path, "b.csv")
        _, c = run([*args, "--workers", "2"], tmp_path, "c.csv")
        assert a == b == c
        _, d = run([cmd, "--trials", "60", "--sweep", "0:2:1", "--seed", "12"], tmp_path, "d.csv")
        assert d != a

    def test_trace_reproducible(self, tmp_path):
        _, a = run(["trace", "--photons", "6", "--seed", "5"], tmp_path, "a.txt")
        _, b = run(["trace", "--photons", "6", "--seed", "5"], tmp_path, "b.txt")
        assert a == b
        records = [l for l in a.splitlines() if not l.startswith("#")]
        assert len(records) == 6
        assert [l.split()[0] for l in records] == [str(k) for k in range(1, 7)]


class TestVerify:
    def test_passes(self, tmp_path):
        code, text = run(["verify", "--dist", "fock", "--param", "3", "--count", "20"], tmp_path)
        assert code == EXIT_OK
        assert text.rstrip().endswith("result=pass")
        assert sum(1 for l in text.splitlines() if "status=pass" in l) == 20

    def test_thermal_completeness(self, tmp_path):
        code, text = run(["verify", "--dist", "thermal", "--param", "1", "--count", "2"], tmp_path)
        assert code == EXIT_OK
        for line in text.splitlines():
            if line.startswith("theta="):
                fields = dict(kv.split("=") for kv in line.split())
                assert float(fields["completeness_residual"]) < 1e-9

    def test_corrupted_block_fails(self, tmp_path, capsys):
        code, text = run(["verify", "--dist", "fock", "--param", "3", "--count", "3", "--corrupt-block", "3"], tmp_path)
        assert code == EXIT_VERIFY_FAILED
        assert "result=FAIL" in text
        assert "verification failed" in capsys.readouterr().err

    def test_bad_distribution(self, tmp_path):
        code, _ = run(["verify", "--dist", "laser"], tmp_path)
        assert code == EXIT_USAGE


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mlpovm", "likelihood", "--sweep", "0:0:1", "--u-sweep", "0:0:1"],
                         capture_output=True, text=True, check=True)
    lines = out.stdout.splitlines()
    assert lines[1] == "nbar,fidelity_u,likelihood"
    assert float(lines[2].split(",")[2]) == pytest.approx(1 / FOUR_PI)
