"""Unit tests for hqugan.cli: configs, run artifacts, sweeps, post-processing and exit codes."""
import csv
import json

import pytest

from hqugan.cli import (
    EXIT_COLLAPSE,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    RUNS_ENV,
    SWEEP_COLUMNS,
    ConfigError,
    cmd_analyze,
    cmd_run,
    cmd_sweep,
    config_from_dict,
    main,
    parse_values,
)
from hqugan.controls import build_ltfim, load_schedule_csv, propagate
from hqugan.qcore import basis_state, fidelity, ghz_state


def write_config(path, **fields):
    data = {"experiment": "GhzGrape", "seed": 0, "n_qubits": 1, **fields}
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def ghz_run(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", output_dir=str(tmp_path / "runs"))
    return cmd_run(cfg)


class TestConfig:
    def test_missing_required_field(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"experiment": "GhzGrape", "seed": 0})
        assert exc.value.field == "n_qubits"

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"experiment": "GhzGrape", "seed": 0, "n_qubits": 1, "bogus": 1})

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"experiment": "Nope", "seed": 0, "n_qubits": 1})
        assert exc.value.field == "experiment"

    def test_defaults_resolved(self):
        cfg = config_from_dict({"experiment": "Bandwidth", "seed": 0, "n_qubits": 2}).resolved()
        assert cfg.T == 10.0 and cfg.N == 1000 and cfg.max_rounds == 100

    def test_hash_ignores_output_location(self, tmp_path):
        a = config_from_dict({"experiment": "GhzGrape", "seed": 0, "n_qubits": 1})
        b = config_from_dict({"experiment": "GhzGrape", "seed": 0, "n_qubits": 1, "output_dir": str(tmp_path)})
        assert a.hash() == b.hash()

    def test_parse_values(self):
        assert parse_values("1, 2.5,,abs_squared") == [1, 2.5, "abs_squared"]


class TestRun:
    def test_exit_ok(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", output_dir=str(tmp_path / "runs"))
        assert main(["run", str(cfg)]) == EXIT_OK
        assert "Converged" in capsys.readouterr().out

    def test_exit_collapse(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", experiment="ModeCollapse", output_dir=str(tmp_path))
        assert main(["run", str(cfg)]) == EXIT_COLLAPSE

    def test_exit_config_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "GhzGrape", "seed": 0}))
        assert main(["run", str(cfg)]) == EXIT_CONFIG
        assert "n_qubits" in capsys.readouterr().err

    def test_exit_config_bad_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["run", str(cfg)]) == EXIT_CONFIG

    def test_artifacts(self, ghz_run):
        out = ghz_run.run_dir
        manifest = json.loads((out / "manifest.json").read_text())
        for key in ("config_hash", "files", "tool_version", "started", "finished", "status", "rounds",
                    "final_fidelity", "final_schedule", "wall_times"):
            assert key in manifest
        assert all((out / f).is_file() for f in manifest["files"])
        assert manifest["status"] == ghz_run.status and manifest["rounds"] == ghz_run.rounds
        assert len([f for f in manifest["files"] if f.startswith("schedule_round_")]) == ghz_run.rounds + 1
        rows = read_csv(out / "fidelity_curve.csv")
        assert rows[0] == ["round", "fidelity", "cost"] and rows[1][2] == "nan"
        assert [int(r[0]) for r in rows[1:]] == list(range(ghz_run.rounds + 1))
        lines = (out / "trace.jsonl").read_text().splitlines()
        assert len(lines) == ghz_run.rounds + 1 and not any("wall" in line for line in lines)
        assert json.loads(lines[-1])["status"] == ghz_run.status

    def test_schedules_reproduce_curve(self, ghz_run):
        out = ghz_run.run_dir
        model, sigma = build_ltfim(1), ghz_state(1)
        for row in read_csv(out / "fidelity_curve.csv")[1:]:
            sched = load_schedule_csv(out / f"schedule_round_{row[0]}.csv", 5.0)
            rho, _ = propagate(model, sched, basis_state("1"))
            assert fidelity(rho, sigma) == pytest.approx(float(row[1]), abs=1e-10)

    def test_deterministic(self, tmp_path):
        a = cmd_run(write_config(tmp_path / "a.json", n_qubits=2, max_rounds=2, output_dir=str(tmp_path / "a")))
        b = cmd_run(write_config(tmp_path / "b.json", n_qubits=2, max_rounds=2, output_dir=str(tmp_path / "b")))
        assert (a.run_dir / "trace.jsonl").read_bytes() == (b.run_dir / "trace.jsonl").read_bytes()
        assert a.run_dir.name == b.run_dir.name

    def test_run_id_and_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(RUNS_ENV, str(tmp_path / "env"))
        out = cmd_run(write_config(tmp_path / "cfg.json", run_id="mine"))
        assert out.run_dir == tmp_path / "env" / "mine"

    def test_refidelity_artifact(self, tmp_path):
        out = cmd_run(write_config(tmp_path / "cfg.json", experiment="Refidelity", max_rounds=1, fine_factor=4,
                                   output_dir=str(tmp_path)))
        rep = json.loads((out.run_dir / "refidelity.json").read_text())
        assert set(rep) == {"coarse_fidelity", "fine_fidelity", "fine_factor", "n_steps"}
        assert rep["fine_factor"] == 4 and rep["coarse_fidelity"] == pytest.approx(out.final_fidelity, abs=1e-12)


class TestSweep:
    def test_rows(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", output_dir=str(tmp_path))
        path = cmd_sweep(cfg, "seed", [0, 1])
        rows = read_csv(path)
        assert rows[0] == SWEEP_COLUMNS and [r[0] for r in rows[1:]] == ["0", "1"]
        assert all(r[4] == "Converged" and int(r[1]) >= 0 for r in rows[1:])

    def test_empty_values(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        assert read_csv(cmd_sweep(cfg, "seed", [], out_path=tmp_path / "s.csv")) == [SWEEP_COLUMNS]

    def test_failed_instance_recorded(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        rows = read_csv(cmd_sweep(cfg, "cost", ["abs_squared", "bogus"], out_path=tmp_path / "s.csv"))
        assert rows[1][4] == "Converged"
        assert rows[2][4].startswith("error:") and rows[2][2] == ""

    def test_workers_match_serial(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        serial = read_csv(cmd_sweep(cfg, "seed", [0, 1, 2], out_path=tmp_path / "a.csv"))
        pooled = read_csv(cmd_sweep(cfg, "seed", [0, 1, 2], workers=2, out_path=tmp_path / "b.csv"))
        drop_time = lambda rows: [r[:3] + r[4:] for r in rows]
        assert drop_time(serial) == drop_time(pooled)

    def test_not_sweepable(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        assert main(["sweep", str(cfg), "--axis", "experiment", "--values", "GhzKrotov"]) == EXIT_CONFIG


class TestAnalyze:
    def test_fft(self, tmp_path):
        cfg = write_config(tmp_path / "bw.json", experiment="Bandwidth", n_qubits=1, max_rounds=1, N=100,
                           output_dir=str(tmp_path))
        out = cmd_run(cfg)
        assert (out.run_dir / "spectrum.csv").is_file()
        summary = json.loads((out.run_dir / "spectrum.json").read_text())
        (out.run_dir / "spectrum.json").unlink()
        assert main(["analyze", str(out.run_dir), "--kind", "fft"]) == EXIT_OK
        assert json.loads((out.run_dir / "spectrum.json").read_text()) == summary

    def test_refidelity(self, ghz_run):
        assert main(["analyze", str(ghz_run.run_dir), "--kind", "refidelity", "--fine-factor", "3"]) == EXIT_OK
        rep = json.loads((ghz_run.run_dir / "refidelity.json").read_text())
        assert rep["fine_factor"] == 3 and rep["n_steps"] == 50

    def test_speedlimit(self, tmp_path):
        args = ["analyze", str(tmp_path), "--kind", "speedlimit", "--dim", "8", "--bandwidth", "1",
                "--bit-depth", "4", "--epsilon", "0.001"]
        assert main(args) == EXIT_OK
        assert json.loads((tmp_path / "speedlimit.json").read_text()) == pytest.approx(19.9316, abs=1e-4)

    def test_speedlimit_missing_args(self, tmp_path):
        assert main(["analyze", str(tmp_path), "--kind", "speedlimit", "--dim", "8"]) == EXIT_CONFIG

    def test_missing_artifacts(self, tmp_path):
        assert main(["analyze", str(tmp_path), "--kind", "fft"]) == EXIT_RUNTIME
        with pytest.raises(FileNotFoundError):
            cmd_analyze(tmp_path, "refidelity")
