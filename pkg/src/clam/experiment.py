"""Experiment configs and the seed x augmentation x method sweep.

A config is a flat YAML mapping.  Recognised keys (defaults in
``DEFAULTS``)::

    dataset            synthetic | synthetic_images | idx | csv
    n_classes, dim, samples_per_class, test_per_class,
    overlap_pairs, overlap, separation      synthetic blobs
    image_size, noise                        synthetic_images
    train_images, train_labels, test_images, test_labels   idx
    train_csv, test_csv                      csv
    augmentation       none | crop | jitter
    crop_lower_bounds  list of crop lower bounds to sweep
    jitter_strengths   list; each value sets brightness = contrast = saturation
    arch, hidden       softmax | mlp, hidden width
    epochs, batch_size, learning_rate, iters_per_epoch, exact_epoch_acc
    methods            list drawn from normal, focal, pw, tce, ggf, clam
    focal_gamma, tce_gamma, pw_gamma, pw_theta,
    ggf_alpha, ggf_w_min, ggf_f,
    clam_tau, clam_u_min (null = 1/(2n)), clam_projection
    seeds, output_dir, worst_fraction

Relative paths in the config are resolved against the config file.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .classifier import TrainConfig, train_method
from .data import AugmentationSpec, gen_synthetic, gen_synthetic_images, load_csv, load_idx
from .losses import METHODS, LossSpec
from .metrics import AGGREGATE_COLUMNS, REPORT_COLUMNS, aggregate, fairness_report, write_report_rows
from .simplex import Projection

log = logging.getLogger(__name__)

DEFAULTS = {
    "dataset": "synthetic",
    "n_classes": 5,
    "dim": 10,
    "samples_per_class": 200,
    "test_per_class": None,
    "overlap_pairs": [],
    "overlap": 1.0,
    "separation": 10.0,
    "image_size": 8,
    "noise": 0.25,
    "train_images": None,
    "train_labels": None,
    "test_images": None,
    "test_labels": None,
    "train_csv": None,
    "test_csv": None,
    "augmentation": "none",
    "crop_lower_bounds": [1.0],
    "jitter_strengths": [0.0],
    "arch": "mlp",
    "hidden": 64,
    "epochs": 40,
    "batch_size": 128,
    "learning_rate": 0.1,
    "iters_per_epoch": None,
    "exact_epoch_acc": False,
    "methods": ["normal", "clam"],
    "focal_gamma": 2.0,
    "tce_gamma": 0.5,
    "pw_gamma": 2.5,
    "pw_theta": 0.8,
    "ggf_alpha": 0.9,
    "ggf_w_min": 0.1,
    "ggf_f": 1,
    "clam_tau": 1.0,
    "clam_u_min": None,
    "clam_projection": "scaled_clip",
    "seeds": [0],
    "output_dir": "runs",
    "worst_fraction": 0.1,
}

PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv", "output_dir")

RUN_COLUMNS = ("run_id", "method", "seed", "augmentation", "with_da") + REPORT_COLUMNS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Job:
    run_id: str
    method: str
    seed: int
    augmentation: AugmentationSpec


class ExperimentConfig:
    """Validated view of a flat config mapping."""

    def __init__(self, values: dict | None = None, base_dir=None):
        values = dict(values or {})
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = {**DEFAULTS, **values}
        base = Path(base_dir) if base_dir is not None else None
        for key in PATH_KEYS:
            if cfg[key] is not None and base is not None and not os.path.isabs(cfg[key]):
                cfg[key] = str(base / cfg[key])
        self.values = cfg
        self.validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                values = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config must be a flat key: value mapping")
        return cls(values, base_dir=path.parent)

    def __getitem__(self, key):
        return self.values[key]

    def override(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(vals)

    def validate(self) -> None:
        c = self.values
        if c["dataset"] not in ("synthetic", "synthetic_images", "idx", "csv"):
            raise ConfigError(f"unknown dataset source {c['dataset']!r}")
        if c["dataset"] == "idx" and not all(c[k] for k in ("train_images", "train_labels")):
            raise ConfigError("idx dataset needs train_images and train_labels")
        if c["dataset"] == "csv" and not c["train_csv"]:
            raise ConfigError("csv dataset needs train_csv")
        if c["dataset"].startswith("synthetic"):
            if min(c["n_classes"], c["samples_per_class"]) <= 0:
                raise ConfigError("empty dataset: n_classes and samples_per_class must be positive")
            if c["n_classes"] < 2:
                raise ConfigError("need at least two classes")
            if c["dataset"] == "synthetic" and c["dim"] < c["n_classes"]:
                raise ConfigError("dim must be at least n_classes")
        bad = [m for m in c["methods"] if m not in METHODS]
        if bad or not c["methods"]:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}; got {c['methods']}")
        if not c["seeds"]:
            raise ConfigError("no seeds given")
        if c["clam_tau"] <= 0:
            raise ConfigError("clam_tau must be > 0")
        try:
            Projection(c["clam_projection"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        n = c["n_classes"] if c["dataset"].startswith("synthetic") else None
        if n is not None and c["clam_u_min"] is not None and n * c["clam_u_min"] > 1:
            raise ConfigError(f"infeasible simplex: n * u_min = {n * c['clam_u_min']} > 1")
        if c["clam_u_min"] is not None and c["clam_u_min"] < 0:
            raise ConfigError("clam_u_min must be non-negative")
        if c["augmentation"] not in ("none", "crop", "jitter"):
            raise ConfigError(f"unknown augmentation {c['augmentation']!r}")
        if c["augmentation"] != "none" and c["dataset"] in ("synthetic", "csv"):
            raise ConfigError("image augmentation needs an image dataset (synthetic_images or idx)")
        try:
            self.augmentations()
            self.train_config(0)
            for m in c["methods"]:
                self.loss_spec(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def augmentations(self) -> list[AugmentationSpec]:
        c = self.values
        if c["augmentation"] == "crop":
            return [AugmentationSpec("crop", crop_lower_bound=float(b)) for b in c["crop_lower_bounds"]]
        if c["augmentation"] == "jitter":
            return [AugmentationSpec("jitter", brightness=s, contrast=s, saturation=s) for s in c["jitter_strengths"]]
        return [AugmentationSpec()]

    def train_config(self, seed: int, augmentation: AugmentationSpec | None = None) -> TrainConfig:
        c = self.values
        return TrainConfig(
            epochs=c["epochs"], iters_per_epoch=c["iters_per_epoch"], batch_size=c["batch_size"],
            learning_rate=c["learning_rate"], seed=seed, arch=c["arch"], hidden=c["hidden"],
            exact_epoch_acc=bool(c["exact_epoch_acc"]), augmentation=augmentation or AugmentationSpec(),
        )

    def loss_spec(self, method: str) -> LossSpec:
        c = self.values
        if method == "focal":
            return LossSpec("focal", gamma=c["focal_gamma"])
        if method == "tce":
            return LossSpec("tce", gamma=c["tce_gamma"])
        if method == "pw":
            return LossSpec("pw", gamma=c["pw_gamma"], theta_pw=c["pw_theta"])
        if method == "ggf":
            return LossSpec("ggf", alpha=c["ggf_alpha"], w_min=c["ggf_w_min"], f=c["ggf_f"])
        if method == "clam":
            return LossSpec("clam", tau=c["clam_tau"], u_min=c["clam_u_min"], projection=c["clam_projection"])
        return LossSpec("normal")

    def load_data(self, seed: int):
        """(train, test) for this seed; synthetic data is regenerated per seed."""
        c = self.values
        if c["dataset"] == "synthetic":
            return gen_synthetic(
                c["n_classes"], c["dim"], c["samples_per_class"], c["overlap_pairs"], seed,
                test_per_class=c["test_per_class"], separation=c["separation"], overlap=c["overlap"],
            )
        if c["dataset"] == "synthetic_images":
            return gen_synthetic_images(
                c["n_classes"], c["image_size"], c["samples_per_class"], c["overlap_pairs"], seed,
                test_per_class=c["test_per_class"], noise=c["noise"], overlap=c["overlap"],
            )
        if c["dataset"] == "idx":
            train = load_idx(c["train_images"], c["train_labels"])
            test = None
            if c["test_images"]:
                test = load_idx(c["test_images"], c["test_labels"], train.n_classes, "test")
            return train, test
        train = load_csv(c["train_csv"])
        test = load_csv(c["test_csv"], train.n_classes, "test") if c["test_csv"] else None
        return train, test

    def jobs(self) -> list[Job]:
        out = []
        for method in self.values["methods"]:
            for seed in self.values["seeds"]:
                for aug in self.augmentations():
                    out.append(Job(f"{method}_seed{seed}_{aug.tag}", method, int(seed), aug))
        return out


def run_job(cfg: ExperimentConfig, job: Job, out_dir) -> dict:
    """Train one run, write its JSON and curve CSV, return its report row."""
    train, test = cfg.load_data(job.seed)
    n = train.n_classes
    spec = cfg.loss_spec(job.method)
    if spec.method == "clam" and spec.u_min is not None and n * spec.u_min > 1:
        raise ConfigError(f"infeasible simplex: n * u_min = {n * spec.u_min} > 1")
    if not len(train):
        raise ConfigError("empty training set")
    result = train_method(train, cfg.train_config(job.seed, job.augmentation), spec, test)
    final_acc = result.test_acc[-1] if result.test_acc is not None else result.train_acc[-1]
    report = fairness_report(final_acc, cfg["worst_fraction"])

    out_dir = Path(out_dir)
    result.to_json(out_dir / "runs" / f"{job.run_id}.json", report.to_dict())
    curves = result.test_acc if result.test_acc is not None else result.train_acc
    with open(out_dir / "curves" / f"{job.run_id}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "mean_loss"] + list(REPORT_COLUMNS) + [f"w_{i}" for i in range(n)])
        for t, v in enumerate(curves):
            r = fairness_report(v, cfg["worst_fraction"]).row()
            wr.writerow([t, result.mean_loss[t]] + [r[k] for k in REPORT_COLUMNS] + list(result.weights[t]))
    return {
        "run_id": job.run_id, "method": job.method, "seed": job.seed,
        "augmentation": job.augmentation.tag, "with_da": int(not job.augmentation.is_identity),
        **report.row(),
    }


def _run_job_star(args):
    return run_job(*args)


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> list[dict]:
    """Run every (method, seed, augmentation) job; write runs.csv and aggregate.csv.

    Any failing run propagates its exception before the aggregate is written.
    """
    out_dir = Path(out_dir or cfg["output_dir"])
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    (out_dir / "curves").mkdir(parents=True, exist_ok=True)
    jobs = cfg.jobs()
    args = [(cfg, job, out_dir) for job in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_job_star, args))
    else:
        rows = [run_job(*a) for a in args]
    write_report_rows(out_dir / "runs.csv", rows, RUN_COLUMNS)

    agg_rows = []
    for method in cfg["methods"]:
        mine = [r for r in rows if r["method"] == method]
        summary = {col: aggregate([r[col] for r in mine]) for col in REPORT_COLUMNS}
        row = {"method": method, **{col: summary[col]["mean"] for col in REPORT_COLUMNS}}
        row.update({f"{col}_sd": summary[col]["std"] for col in REPORT_COLUMNS})
        row["n_runs"] = len(mine)
        agg_rows.append(row)
    columns = list(AGGREGATE_COLUMNS) + [f"{c}_sd" for c in REPORT_COLUMNS] + ["n_runs"]
    write_report_rows(out_dir / "aggregate.csv", agg_rows, columns)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(cfg.values, fh, indent=2)
    return rows


def read_runs(run_dir) -> list[dict]:
    with open(Path(run_dir) / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"] = int(r["seed"])
        r["with_da"] = bool(int(r["with_da"]))
        for col in REPORT_COLUMNS:
            r[col] = float(r[col])
    return rows


def range_difference_table(rows: list[dict]):
    """Pair with-DA runs with the no-DA run of the same (method, seed).

    Returns ``(table, unpaired)``: per method the mean and sample std, over
    seeds, of the seed's average ``range(with DA) - range(without DA)``, plus
    the run ids that had no partner.
    """
    base = {}
    for r in rows:
        if not r["with_da"]:
            base.setdefault((r["method"], r["seed"]), r)
    diffs: dict[str, dict[int, list[float]]] = {}
    unpaired = []
    paired_keys = set()
    for r in rows:
        if not r["with_da"]:
            continue
        key = (r["method"], r["seed"])
        if key not in base:
            unpaired.append(r["run_id"])
            continue
        paired_keys.add(key)
        diffs.setdefault(r["method"], {}).setdefault(r["seed"], []).append(r["range"] - base[key]["range"])
    unpaired += [b["run_id"] for k, b in base.items() if k not in paired_keys]
    table = []
    for method, per_seed in diffs.items():
        s = aggregate([float(np.mean(v)) for v in per_seed.values()])
        table.append({"method": method, "range_diff": s["mean"], "range_diff_sd": s["std"], "n_seeds": s["n"]})
    return table, unpaired


def worst_class_table(rows: list[dict]) -> list[dict]:
    table = []
    for method in dict.fromkeys(r["method"] for r in rows):
        s = aggregate([r["worst_acc"] for r in rows if r["method"] == method])
        table.append({"method": method, "worst_acc": s["mean"], "worst_acc_sd": s["std"], "n_runs": s["n"]})
    return table
