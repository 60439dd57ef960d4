import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from clam.cli import main
from clam.data import gen_synthetic, load_csv
from clam.experiment import ConfigError, ExperimentConfig, range_difference_table


def write_config(path, **values):
    path.write_text(yaml.safe_dump(values))
    return str(path)


SMALL = dict(n_classes=3, dim=4, samples_per_class=30, test_per_class=20, overlap_pairs=[[0, 1]],
             epochs=2, batch_size=16, hidden=8)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestTrain:
    def test_smoke_single_run(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", methods=["normal"], **SMALL)
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
        out = tmp_path / "out"
        assert len(list((out / "runs").glob("*.json"))) == 1
        rows = read_csv(out / "runs.csv")
        assert len(rows) == 1 and rows[0]["method"] == "normal"
        agg = read_csv(out / "aggregate.csv")
        assert list(agg[0])[:6] == ["method", "std", "cov", "range", "mean_acc", "worst_acc"]
        curve = read_csv(next((out / "curves").glob("*.csv")))
        assert len(curve) == 2

    def test_seeds_override_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", methods=["normal", "clam"], **SMALL)
        assert main(["train", "--config", cfg, "--seeds", "0,1", "--out", str(tmp_path / "a")]) == 0
        assert main(["train", "--config", cfg, "--seeds", "0,1", "--out", str(tmp_path / "b")]) == 0
        assert len(read_csv(tmp_path / "a" / "runs.csv")) == 4
        assert (tmp_path / "a" / "runs.csv").read_bytes() == (tmp_path / "b" / "runs.csv").read_bytes()
        assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()

    def test_crop_sweep_counts(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", dataset="synthetic_images", n_classes=3, image_size=6,
                           samples_per_class=10, epochs=1, batch_size=10, hidden=8, methods=["normal"],
                           augmentation="crop", crop_lower_bounds=[0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = read_csv(tmp_path / "o" / "runs.csv")
        assert len(rows) == 8
        assert sum(r["with_da"] == "1" for r in rows) == 7

    @pytest.mark.parametrize("bad", [
        dict(clam_tau=0.0), dict(clam_tau=-1.0), dict(clam_u_min=0.5), dict(samples_per_class=0),
        dict(methods=["svm"]), dict(bogus_key=1), dict(augmentation="crop"), dict(seeds=[]),
        dict(clam_projection="nearest"),
    ])
    def test_config_errors(self, tmp_path, bad):
        cfg = write_config(tmp_path / "c.yaml", **{**SMALL, **bad})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert not (tmp_path / "o" / "aggregate.csv").exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.yaml")]) == 1

    def test_run_failure_leaves_no_aggregate(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", dataset="csv", train_csv="missing.csv", **SMALL)
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o" / "aggregate.csv").exists()

    def test_csv_dataset_relative_path(self, tmp_path):
        assert main(["gen-data", "--n-classes", "3", "--dim", "4", "--samples-per-class", "20",
                     "--out", str(tmp_path / "data")]) == 0
        cfg = write_config(tmp_path / "c.yaml", dataset="csv", train_csv="data/train.csv",
                           test_csv="data/test.csv", methods=["clam"], epochs=1, batch_size=16, hidden=8)
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 0

    def test_workers(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", methods=["normal"], **SMALL)
        assert main(["train", "--config", cfg, "--seeds", "0 1", "--workers", "2", "--out", str(tmp_path / "w")]) == 0
        assert main(["train", "--config", cfg, "--seeds", "0 1", "--out", str(tmp_path / "s")]) == 0
        assert (tmp_path / "w" / "runs.csv").read_bytes() == (tmp_path / "s" / "runs.csv").read_bytes()


class TestGame:
    def test_pennies(self, tmp_path):
        rc = main(["game", "--matrix", "pennies", "--T", "10000", "--tau", "0.1", "--out", str(tmp_path)])
        assert rc == 0
        doc = json.load(open(tmp_path / "diagnostics.json"))
        assert abs(doc["lhs"] - 0.5) <= 0.02
        assert doc["per_step_violations"] == 0
        for key in ("lhs", "best_fixed", "rhs_exact", "rhs_theorem", "max_alpha", "per_step_violations"):
            assert key in doc

    def test_empty(self, tmp_path):
        assert main(["game", "--T", "0", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("t,j_t,V_t,w_1")

    def test_theorem_mode(self, tmp_path):
        assert main(["game", "--n", "5", "--T", "300", "--tau", "theorem", "--out", str(tmp_path)]) == 0
        doc = json.load(open(tmp_path / "diagnostics.json"))
        assert doc["tau_mode"] == "theorem" and doc["summed_bound_holds"]
        assert doc["tau"] < 1

    def test_random_seeds(self, tmp_path):
        for seed in range(10):
            assert main(["game", "--n", "10", "--m", "8", "--T", "200", "--seed", str(seed), "--out", str(tmp_path)]) == 0

    def test_matrix_file(self, tmp_path):
        np.savetxt(tmp_path / "m.csv", [[0.2, 0.9], [0.8, 0.1], [0.5, 0.5]], delimiter=",")
        assert main(["game", "--matrix", str(tmp_path / "m.csv"), "--T", "50", "--out", str(tmp_path / "o")]) == 0
        assert "w_3" in (tmp_path / "o" / "trace.csv").read_text().splitlines()[0]

    @pytest.mark.parametrize("args", [["--u-min", "0.6"], ["--tau", "-1"], ["--tau", "abc"], ["--T", "-3"],
                                      ["--matrix", "/nonexistent.csv"]])
    def test_config_errors(self, tmp_path, args):
        assert main(["game", "--n", "2", "--out", str(tmp_path)] + args) == 1


class TestReport:
    def _rows(self):
        rows = []
        for method, base, da in (("normal", 0.30, 0.35), ("clam", 0.30, 0.28)):
            rows.append(dict(run_id=f"{method}_none", method=method, seed=0, with_da=False, range=base, worst_acc=0.5))
            rows.append(dict(run_id=f"{method}_da", method=method, seed=0, with_da=True, range=da, worst_acc=0.6))
        return rows

    def test_pairing(self):
        table, unpaired = range_difference_table(self._rows())
        d = {r["method"]: r["range_diff"] for r in table}
        assert d["normal"] == pytest.approx(0.05) and d["clam"] == pytest.approx(-0.02)
        assert not unpaired

    def test_identical_and_unpaired(self):
        rows = [dict(run_id="a", method="m", seed=0, with_da=False, range=0.2),
                dict(run_id="b", method="m", seed=0, with_da=True, range=0.2),
                dict(run_id="c", method="m", seed=1, with_da=True, range=0.4)]
        table, unpaired = range_difference_table(rows)
        assert table == [{"method": "m", "range_diff": 0.0, "range_diff_sd": 0.0, "n_seeds": 1}]
        assert unpaired == ["c"]

    def test_end_to_end(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", dataset="synthetic_images", n_classes=3, image_size=6,
                           samples_per_class=10, epochs=1, batch_size=10, hidden=8, methods=["normal", "clam"],
                           augmentation="crop", crop_lower_bounds=[0.5, 1.0])
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "runs")]) == 0
        assert main(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")]) == 0
        table = read_csv(tmp_path / "rep" / "range_difference.csv")
        assert [r["method"] for r in table] == ["normal", "clam"]
        assert len(read_csv(tmp_path / "rep" / "worst_class.csv")) == 2

    def test_missing_dir(self, tmp_path):
        assert main(["report", str(tmp_path / "nope"), "--out", str(tmp_path / "rep")]) == 1


class TestGenData:
    args = ["gen-data", "--n-classes", "4", "--dim", "5", "--samples-per-class", "15",
            "--overlap-pairs", "0-1,0-2", "--overlap", "0.7", "--seed", "3"]

    def test_files_and_determinism(self, tmp_path):
        assert main(self.args + ["--out", str(tmp_path / "a")]) == 0
        assert main(self.args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("train.csv", "test.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            lines = (tmp_path / "a" / name).read_text().splitlines()
            assert lines[0] == "f0,f1,f2,f3,f4,label" and len(lines) == 61

    def test_round_trip(self, tmp_path):
        assert main(self.args + ["--out", str(tmp_path)]) == 0
        train, test = gen_synthetic(4, 5, 15, [(0, 1), (0, 2)], 3, overlap=0.7)
        for ds, name in ((train, "train.csv"), (test, "test.csv")):
            back = load_csv(tmp_path / name)
            np.testing.assert_array_equal(back.X, ds.X)
            np.testing.assert_array_equal(back.y, ds.y)

    def test_bad_params(self, tmp_path):
        assert main(["gen-data", "--n-classes", "6", "--dim", "3", "--out", str(tmp_path)]) == 1

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["gen-data", "--out", str(blocker / "sub")]) == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "clam", "game", "--T", "0", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0


def test_config_override_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig().override(clam_tau=0.0)


@pytest.mark.parametrize("name", ["synthetic.yaml", "crop_sweep.yaml"])
def test_shipped_configs_validate(name):
    from pathlib import Path
    cfg = ExperimentConfig.from_file(Path(__file__).parent.parent / "configs" / name)
    assert cfg.jobs()
