import csv
import json

import pytest

from haarbook.cli import build_parser, main


def run(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    return code, out, err


def strip_volatile(report):
    report = dict(report)
    report.pop("timestamp")
    report["config"] = {k: v for k, v in report["config"].items() if k not in ("out", "csv")}
    return report


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for cmd in ("verify", "dutch-book", "identity", "simulate"):
            assert parser.parse_args([cmd]).command == cmd

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

    def test_bad_kernel(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["verify", "--kernel", "flat"])
        assert info.value.code == 2

    def test_negative_seed(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["verify", "--seed", "-3"])
        assert info.value.code == 2


class TestUsageErrors:
    def test_malformed_beta(self, capsys):
        code, _, err = run(capsys, "verify", "--kernel", "beta", "--beta", "2")
        assert code == 2
        assert "β < (n−p+1)/2" in err

    def test_zero_rounds(self, capsys):
        code, _, err = run(capsys, "simulate", "--rounds", "0")
        assert code == 2 and "rounds" in err

    def test_small_budget(self, capsys):
        assert run(capsys, "dutch-book", "--budget", "10")[0] == 2

    def test_unwritable(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--rounds", "10", "--out", str(tmp_path / "no" / "x.csv"))
        assert code == 2 and "cannot write" in err

    def test_bad_config_file(self, capsys, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("budgett: 5000\n")
        assert run(capsys, "verify", "--config", str(path))[0] == 2


class TestVerify:
    def test_default_passes(self, capsys, tmp_path):
        out = tmp_path / "r.json"
        code, _, _ = run(capsys, "verify", "--out", str(out))
        report = json.loads(out.read_text())
        assert code == 0 and report["verdict"] == "pass"
        for c in report["checks"]:
            assert {"name", "value", "error", "tolerance", "passed"} <= set(c)
            if c["name"].startswith(("psi_identity", "invariance", "tau_equivariance")):
                assert c["tolerance"] == 1e-10
        assert {"started", "wall_clock_s"} == set(report["timestamp"])
        assert {"haarbook", "python", "numpy", "scipy"} == set(report["versions"])

    def test_p1_reports_coincidence(self, capsys):
        code, out, _ = run(capsys, "verify", "--p", "1", "--n", "2")
        report = json.loads(out)
        assert code == 0
        assert any(c["name"] == "haar_equals_jeffreys_p1" and c["passed"] for c in report["checks"])
        assert "coincide" in report["note"]

    def test_failure_exit_code(self, capsys, monkeypatch):
        from haarbook import checks

        real = checks.psi_identity
        monkeypatch.setattr(checks, "psi_identity", lambda p, **kw: real(p, tol=0.0, **kw) if p == 3 else real(p, **kw))
        code, out, _ = run(capsys, "verify")
        assert code == 1 and json.loads(out)["verdict"] == "fail"


class TestDutchBook:
    def test_jeffreys(self, capsys, tmp_path):
        csv_path = tmp_path / "pay.csv"
        code, out, _ = run(capsys, "dutch-book", "--budget", "50000", "--rounds", "1000", "--csv", str(csv_path))
        report = json.loads(out)
        assert code == 0
        assert report["verdict"] == "SI-holds" and not report["inconclusive"]
        assert report["epsilon0"]["mean"] == pytest.approx(0.15117363684322485, abs=1e-9)
        rows = list(csv.reader(csv_path.open()))
        assert rows[0] == ["theta_index", "round", "payoff"]
        assert len(rows) == 1 + 5 * 1000

    def test_haar_inconclusive(self, capsys):
        code, out, _ = run(capsys, "dutch-book", "--kernel", "haar", "--budget", "5000")
        report = json.loads(out)
        assert code == 0 and report["verdict"] == "inconclusive" and report["inconclusive"]
        assert all(m["estimate"]["mean"] == 0.0 for m in report["model_side"])

    def test_p1_inconclusive(self, capsys):
        code, out, _ = run(capsys, "dutch-book", "--p", "1", "--budget", "5000")
        assert code == 0 and json.loads(out)["verdict"] == "inconclusive"

    def test_byte_identical_modulo_timestamp(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "dutch-book", "--budget", "20000", "--out", str(a))
        run(capsys, "dutch-book", "--budget", "20000", "--out", str(b), "--threads", "2")
        ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
        ra["config"].pop("threads"), rb["config"].pop("threads")
        assert strip_volatile(ra) == strip_volatile(rb)

    def test_theta_file(self, capsys, tmp_path):
        path = tmp_path / "thetas.json"
        path.write_text("[[1, 0, 100], [2, 1, 1]]")
        code, out, _ = run(capsys, "dutch-book", "--budget", "5000", "--theta-file", str(path))
        assert code == 0 and len(json.loads(out)["model_side"]) == 2


class TestIdentity:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "identity", "--budget", "100000")
        report = json.loads(out)
        assert code == 0
        assert report["verdict"] == "identity-holds" and report["control_differs"]
        functions = {c["function"] for c in report["checks"]}
        assert len(functions) == 4
        assert sum(not c["invariant"] for c in report["checks"]) == 5


class TestSimulate:
    def test_csv(self, capsys, tmp_path):
        out = tmp_path / "t.csv"
        code, _, err = run(capsys, "simulate", "--rounds", "500", "--out", str(out))
        assert code == 0 and "mean payoff" in err
        text = out.read_bytes()
        assert b"\r" not in text
        rows = list(csv.reader(text.decode().splitlines()))
        assert rows[0] == ["round", "x_digest", "in_region", "price", "payoff", "cumulative_wealth"]
        assert rows[1][0] == "1" and rows[500][0] == "500"
        assert rows[-2][0] == "mean" and rows[-1][0] == "stderr"

    def test_threads_bit_exact(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "simulate", "--rounds", "120000", "--out", str(a), "--threads", "1")
        run(capsys, "simulate", "--rounds", "120000", "--out", str(b), "--threads", "4")
        assert a.read_bytes() == b.read_bytes()

    def test_haar_zero(self, capsys, tmp_path):
        out = tmp_path / "t.csv"
        run(capsys, "simulate", "--kernel", "haar", "--rounds", "200", "--out", str(out))
        rows = list(csv.DictReader(out.open()))
        assert all(float(r["payoff"]) == 0.0 for r in rows)

    def test_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("rounds: 50\nkernel: naive\n")
        out = tmp_path / "t.csv"
        assert run(capsys, "simulate", "--config", str(cfg), "--rounds", "20", "--out", str(out))[0] == 0
        assert len(out.read_text().splitlines()) == 1 + 20 + 2
