from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from fedsim.cli import main
from fedsim.scenarios import desk_dict


def write_config(path, raw):
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture
def small(tmp_path):
    def make(strategy="random", seed=0, **kw):
        raw = desk_dict(strategy, seed, rounds=6, **kw)
        return write_config(tmp_path / f"{strategy}-{seed}.json", raw)

    return make


class TestRun:
    def test_minimal(self, tmp_path, small, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", small(), "--out", str(out)]) == 0
        for name in ("rounds.csv", "summary.json", "manifest.json"):
            assert (out / name).exists()
        assert "final accuracy" in capsys.readouterr().out

    def test_k_greater_than_n(self, tmp_path, capsys):
        raw = desk_dict()
        raw["num_selected"] = 30
        assert main(["run", "--config", write_config(tmp_path / "c.json", raw), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "num_selected" in err and "K <= N" in err

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_bad_workers(self, tmp_path, small):
        assert main(["run", "--config", small(), "--out", str(tmp_path / "o"), "--workers", "0"]) == 2

    def test_rerun_byte_identical(self, tmp_path, small):
        cfg = small("fedemd")
        for name in ("a", "b"):
            assert main(["run", "--config", cfg, "--out", str(tmp_path / name), "--no-timings"]) == 0
        assert (tmp_path / "a" / "rounds.csv").read_bytes() == (tmp_path / "b" / "rounds.csv").read_bytes()

    def test_runtime_failure_exit_1(self, tmp_path, small):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["run", "--config", small(), "--out", str(blocker / "sub")]) == 1


class TestCompare:
    def _runs(self, tmp_path, small, strategies=("random", "fedemd")):
        dirs = {}
        for s in strategies:
            d = tmp_path / s
            assert main(["run", "--config", small(s), "--out", str(d)]) == 0
            dirs[s] = str(d)
        return dirs

    def test_two_rows(self, tmp_path, small, capsys):
        dirs = self._runs(tmp_path, small)
        capsys.readouterr()
        code = main(["compare", dirs["fedemd"], "--reference", dirs["random"], "--out", str(tmp_path / "cmp")])
        assert code == 0
        with open(tmp_path / "cmp" / "comparison.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["tag"] for r in rows} == {"random", "fedemd"}
        assert all(r["r_at_99"] for r in rows)
        assert "R@99" in capsys.readouterr().out

    def test_not_reached_cell(self, tmp_path, small):
        dirs = self._runs(tmp_path, small, ("random",))
        # a run that never learns: zero learning rate, distinct label
        raw = desk_dict("random", rounds=6, label="frozen")
        raw["learner"]["learning_rate"] = 0.0
        frozen = tmp_path / "frozen"
        assert main(["run", "--config", write_config(tmp_path / "f.json", raw), "--out", str(frozen)]) == 0
        assert main(["compare", str(frozen), "--reference", dirs["random"], "--out", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "comparison.json").read_text())
        row = next(r for r in payload["rows"] if r["tag"] == "frozen")
        assert row["r_at_99_text"] == ">6"

    def test_missing_reference(self, tmp_path, small):
        dirs = self._runs(tmp_path, small)
        assert main(["compare", dirs["fedemd"], dirs["random"]]) == 2

    def test_incompatible_runs(self, tmp_path, small):
        dirs = self._runs(tmp_path, small, ("random",))
        raw = desk_dict("fedemd", rounds=6)
        raw["data"]["seed"] = 99
        other = tmp_path / "other"
        assert main(["run", "--config", write_config(tmp_path / "o.json", raw), "--out", str(other)]) == 0
        assert main(["compare", str(other), "--reference", dirs["random"], "--out", str(tmp_path)]) == 2

    def test_not_a_run_dir(self, tmp_path):
        assert main(["compare", str(tmp_path), "--reference", str(tmp_path / "x")]) == 2


class TestVerify:
    def test_default_seed_passes(self, capsys):
        assert main(["verify"]) == 0
        assert "all" in capsys.readouterr().out

    def test_corrupt_gradient_fails(self, capsys):
        assert main(["verify", "--corrupt-gradient"]) == 1
        out = capsys.readouterr().out
        assert "FAIL gradient" in out and "witness" in out


class TestPartitionInspect:
    def test_exclusive(self, tmp_path, small, capsys):
        assert main(["partition-inspect", "--config", small(), "--out", str(tmp_path)]) == 0
        with open(tmp_path / "partition.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        mav = [r for r in rows if r["is_maverick"] == "1"]
        assert len(mav) == 1
        counts = [int(mav[0][f"count_{c}"]) for c in range(4)]
        assert counts == [160, 0, 0, 0]

    def test_shared(self, tmp_path, capsys):
        raw = desk_dict()
        raw["scenario"] = {"num_mavericks": 2, "maverick_classes": [0], "maverick_mode": "shared"}
        cfg = write_config(tmp_path / "s.json", raw)
        assert main(["partition-inspect", "--config", cfg, "--out", str(tmp_path)]) == 0
        with open(tmp_path / "partition.csv", newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["is_maverick"] == "1"]
        assert [int(r["count_0"]) for r in rows] == [80, 80]
        assert all(int(r["count_1"]) == 0 for r in rows)

    def test_invalid_scenario(self, tmp_path):
        raw = desk_dict()
        raw["scenario"] = {"num_mavericks": 1, "maverick_classes": [7]}
        assert main(["partition-inspect", "--config", write_config(tmp_path / "b.json", raw)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fedsim", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "partition-inspect" in out.stdout


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
