import json
import math
import os
import subprocess
import sys
import time

import pytest

from chameleon import cli, station

CHSH_ANGLES = "0,1.5707963,0.7853982,2.3561945"


def _run(capsys, *argv):
    code = cli.dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _cli(*argv, **kw):
    env = dict(os.environ, CHAMELEON_LOG="error")
    return subprocess.run([sys.executable, "-m", "chameleon", *argv], capture_output=True, text=True, env=env, **kw)


class TestRun:
    def test_chsh_example(self, capsys, tmp_path):
        out_dir = tmp_path / "dir"
        code, out, _ = _run(capsys, "run", "--mode", "chsh", "--seed", "42", "--n", "40000", "--angles", CHSH_ANGLES, "--out", str(out_dir))
        assert code == 0
        report = json.loads(out)
        assert abs(report["chsh"]["statistic"] - 2 * math.sqrt(2)) <= 0.1
        assert {p.name for p in out_dir.iterdir()} == {"station1.records", "station2.records", "manifest.json", "report.json", "plot.csv"}
        assert (out_dir / "report.json").read_text() == out

    def test_analyze_reproduces_embedded_report(self, capsys, tmp_path):
        out_dir = tmp_path / "dir"
        _run(capsys, "run", "--mode", "single", "--seed", "7", "--n", "3000", "--angles", "0,pi/3", "--out", str(out_dir))
        _, first, _ = _run(capsys, "analyze", "--in", str(out_dir))
        _, second, _ = _run(capsys, "analyze", "--in", str(out_dir))
        assert first == second == (out_dir / "report.json").read_text()

    def test_csv_report_and_plot(self, capsys, tmp_path):
        out_dir = tmp_path / "dir"
        code, out, _ = _run(capsys, "run", "--mode", "ekert", "--seed", "1", "--n", "900", "--angles", "0,pi/3,2pi/3",
                            "--format", "csv", "--out", str(out_dir))
        assert code == 0
        assert out.splitlines()[0].startswith("kind,label,a,")
        assert (out_dir / "report.csv").read_text() == out
        plot = tmp_path / "p.csv"
        code, _, _ = _run(capsys, "analyze", "--in", str(out_dir), "--plot", str(plot), "--out", str(tmp_path / "r.json"))
        assert code == 0 and plot.read_text().startswith("delta,estimate\n")

    def test_config_file_with_flag_override(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "n": 100, "mode": {"kind": "single", "a": 0, "b": 0}, "output_dir": str(tmp_path / "a")}))
        code, out, _ = _run(capsys, "run", "--config", str(cfg), "--n", "200")
        assert code == 0 and json.loads(out)["n"] == 200
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["config"]["n"] == 200

    def test_bad_config_field_path(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "n": 100, "mode": {"kind": "ekert", "angle_set": [0, "x"]}}))
        code, _, err = _run(capsys, "run", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert code == 1 and "mode.angle_set[1]" in err

    @pytest.mark.parametrize(
        "argv",
        [
            ["run", "--bogus"],
            ["frobnicate"],
            [],
            ["run", "--mode", "chsh", "--seed", "1", "--n", "2", "--angles", "0,1,2,3"],
            ["run", "--mode", "single", "--seed", "1", "--n", "10", "--angles", "0"],
            ["run", "--mode", "single", "--seed", "-3", "--n", "10", "--angles", "0,0"],
            ["station", "--role", "1"],
            ["station", "--role", "3"],
        ],
    )
    def test_validation_exit_code(self, capsys, tmp_path, argv):
        code, out, err = _run(capsys, *argv, *(["--out", str(tmp_path / "o")] if argv[:1] == ["run"] else []))
        assert code == 1
        assert out == "" and err

    def test_usage_text_on_unknown_flag(self, capsys):
        _, _, err = _run(capsys, "run", "--bogus")
        assert "usage:" in err

    def test_runtime_failure_exit_code(self, capsys, tmp_path):
        code, _, err = _run(capsys, "analyze", "--in", str(tmp_path))
        assert code == 2 and "manifest" in err

    def test_help(self, capsys):
        code, out, _ = _run(capsys, "run", "--help")
        assert code == 0 and "--angles" in out


class TestStationFileMode:
    def test_writes_records(self, capsys, tmp_path):
        path = tmp_path / "s1.records"
        code, _, _ = _run(capsys, "station", "--role", "1", "--seed", "0x2a", "--n", "100", "--policy", "fixed:pi/4", "--out", str(path))
        assert code == 0
        assert station.read_records(path) == station.run_station(1, 42, 100, station.Fixed(math.pi / 4))

    def test_stdout(self, capsys):
        code, out, _ = _run(capsys, "station", "--role", "2", "--seed", "1", "--n", "3", "--policy", "random:9:0,1")
        assert code == 0 and out.startswith("# chameleon-records v1 role=2")

    def test_bad_policy(self, capsys):
        code, _, _ = _run(capsys, "station", "--role", "2", "--seed", "1", "--n", "3", "--policy", "weird")
        assert code == 1


class TestVerify:
    def test_passes(self, capsys):
        code, out, _ = _run(capsys, "verify", "--grid", "16", "--tol", "1e-8")
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)

    def test_json_rows(self, capsys):
        code, out, _ = _run(capsys, "verify", "--grid", "2", "--cov-grid", "2", "--json")
        rows = [json.loads(line) for line in out.splitlines()]
        assert code == 0
        assert {tuple(sorted(r)) for r in rows} == {("a", "b", "method", "tol", "value")}
        assert len(rows) == 4 * 4 + 4

    def test_failure_exits_2(self, capsys):
        code, _, _ = _run(capsys, "verify", "--grid", "2", "--cov-grid", "1", "--norm-tol", "1e-30")
        assert code == 2

    def test_bad_grid(self, capsys):
        assert _run(capsys, "verify", "--grid", "0")[0] == 1


@pytest.mark.slow
class TestProcesses:
    def test_two_process_determinism(self, tmp_path):
        args = ["run", "--mode", "chsh", "--seed", "42", "--n", "8000", "--angles", "0,pi/2,pi/4,3pi/4"]
        a = _cli(*args, "--out", str(tmp_path / "a"))
        b = _cli(*args, "--out", str(tmp_path / "b"))
        assert a.returncode == b.returncode == 0
        assert a.stdout == b.stdout
        for name in ("station1.records", "station2.records", "report.json", "plot.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_coordinate_with_station_processes(self, tmp_path):
        env = dict(os.environ, CHAMELEON_LOG="error")
        coord = subprocess.Popen(
            [sys.executable, "-m", "chameleon", "coordinate", "--mode", "single", "--seed", "3", "--n", "5000",
             "--angles", "0,pi/4", "--port", "0", "--timeout", "30", "--out", str(tmp_path / "run")],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env,
        )
        try:
            line = coord.stderr.readline()
            assert line.startswith("listening ")
            endpoint = line.split()[1]
            stations = [
                subprocess.Popen([sys.executable, "-m", "chameleon", "station", "--role", str(r), "--connect", endpoint],
                                 stdout=subprocess.PIPE, text=True, env=env)
                for r in (1, 2)
            ]
            outs = [s.communicate(timeout=30)[0] for s in stations]
            summary = json.loads(coord.communicate(timeout=30)[0])
        finally:
            coord.kill()
        assert coord.returncode == 0 and summary["status"] == "complete"
        assert [json.loads(o)["records"] for o in outs] == [5000, 5000]
        local = _cli("run", "--mode", "single", "--seed", "3", "--n", "5000", "--angles", "0,pi/4", "--out", str(tmp_path / "local"))
        assert local.returncode == 0
        for name in ("station1.records", "station2.records"):
            assert (tmp_path / "run" / name).read_bytes() == (tmp_path / "local" / name).read_bytes()

    def test_coordinate_timeout_exit_code(self, tmp_path):
        t0 = time.monotonic()
        res = _cli("coordinate", "--mode", "single", "--seed", "3", "--n", "10", "--angles", "0,0",
                   "--timeout", "0.5", "--out", str(tmp_path / "run"), timeout=30)
        assert res.returncode == 2 and "timeout" in res.stderr
        assert time.monotonic() - t0 < 10
        assert json.loads((tmp_path / "run" / "manifest.json").read_text())["status"] == "aborted"
