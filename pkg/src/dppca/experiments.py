"""Experiment harness: utility sweeps, burn-in studies and bound curves.

Each run produces a long-form table (one row per trial), an aggregated table
(mean and standard deviation per point) and a metadata record.  Every trial
seed is derived from ``(master_seed, experiment_id, mechanism, n_index,
eps_index, trial)``, so any single row can be recomputed on its own with
:func:`rerun_row`.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from . import __version__
from .bingham import BinghamParam, burnin_statistic, sample_matrix_bingham
from .bounds import modsulq_utility_bound
from .data import SYNTHETIC_SPECTRUM, load_dataset, subsample, synthetic_gaussian
from .linalg import DatasetMatrix, OrthonormalFrame, second_moment, utility_qa, utility_qf
from .mechanisms import (
    PrivacyParams,
    SamplerConfig,
    run_exact,
    run_modsulq,
    run_ppca,
    run_random_projection,
)
from .rng import derive_seed

SCHEMA_VERSION = 1
KINDS = ("utility-vs-n", "utility-vs-epsilon", "burnin", "bounds-figure", "single-run")
OUTPUT_DIR_ENV = "DPPCA_OUTPUT_DIR"
POOLING_NOTE = ("standard deviations pool subsample and mechanism randomness: "
                "all trials at a point are aggregated jointly")

RESULT_FIELDS = ("schema_version", "experiment_id", "mechanism", "n", "epsilon", "delta",
                 "n_index", "eps_index", "subset", "trial", "seed", "q_f", "q_a",
                 "wall_time", "error")
SUMMARY_FIELDS = ("schema_version", "experiment_id", "mechanism", "n", "epsilon", "count",
                  "errors", "q_f_mean", "q_f_std", "q_a_mean", "q_a_std")
BURNIN_FIELDS = ("schema_version", "experiment_id", "trace", "seed", "T", "F", "log_F")
BOUNDS_FIELDS = ("schema_version", "experiment_id", "d", "epsilon", "delta", "n", "bound",
                 "phi", "degenerate")


class ConfigError(ValueError):
    pass


def _default_trials():
    return {"exact": 1, "ppca": 10, "modsulq": 100, "randproj": 100}


@dataclass
class ExperimentConfig:
    kind: str
    experiment_id: str = "experiment"
    dataset: dict[str, Any] = field(default_factory=lambda: {"synthetic": {}})
    k: int = 2
    epsilons: list[float] = field(default_factory=lambda: [0.1])
    delta: float = 0.01
    n_grid: list[int] = field(default_factory=list)
    subsample_repeats: int = 5
    mechanisms: list[str] = field(default_factory=lambda: ["exact", "ppca", "modsulq", "randproj"])
    trials: dict[str, int] = field(default_factory=_default_trials)
    master_seed: int = 0
    sampler: dict[str, Any] = field(default_factory=dict)
    evaluate_on: str = "full"  # utility-vs-n: score on the full data or on the subsample
    traces: int = 5
    checkpoints: list[int] | None = None
    bounds_d: list[int] = field(default_factory=lambda: [50, 100, 500, 1000])
    bounds_n: list[int] = field(default_factory=list)
    output_dir: str | None = None
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        for mech in self.mechanisms:
            if mech not in ("exact", "ppca", "modsulq", "randproj"):
                raise ConfigError(f"unknown mechanism {mech!r}")
            if self.trials.get(mech, 1) < 1:
                raise ConfigError(f"trial count for {mech} must be >= 1")
        if self.traces < 1 or self.subsample_repeats < 1 or self.workers < 1:
            raise ConfigError("traces, subsample_repeats and workers must be >= 1")
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        if self.evaluate_on not in ("full", "subsample"):
            raise ConfigError("evaluate_on must be 'full' or 'subsample'")
        if "path" in self.dataset:
            for key in ("path", "schema"):
                if key not in self.dataset or not Path(self.dataset[key]).exists():
                    raise ConfigError(f"dataset {key} {self.dataset.get(key)!r} does not exist")
        elif "synthetic" not in self.dataset:
            raise ConfigError("dataset must give either 'path'+'schema' or 'synthetic'")
        if self.kind == "utility-vs-n" and not self.n_grid:
            raise ConfigError("utility-vs-n needs a nonempty n_grid")
        if self.kind == "bounds-figure" and not self.bounds_n:
            raise ConfigError("bounds-figure needs a nonempty bounds_n grid")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**obj)
        if "trials" in obj:
            cfg.trials = {**_default_trials(), **obj["trials"]}
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(**self.sampler)


def preset(name: str) -> ExperimentConfig:
    """Named desk-scale configurations for the standard sweeps."""
    if name == "utility-vs-epsilon":
        # Raw Gaussian draws (no clipping), so exact q_F stays near 0.8.
        return ExperimentConfig(
            kind="utility-vs-epsilon", experiment_id="utility_vs_epsilon",
            dataset={"synthetic": {"n": 5000, "spectrum": list(SYNTHETIC_SPECTRUM),
                                   "seed": 0, "basis": "identity", "clip": False}},
            k=2, epsilons=[0.1, 0.5, 1.0, 2.0], delta=0.05,
            mechanisms=["exact", "ppca", "modsulq"],
            trials={"exact": 1, "ppca": 100, "modsulq": 100, "randproj": 100})
    if name == "utility-vs-n":
        return ExperimentConfig(
            kind="utility-vs-n", experiment_id="utility_vs_n",
            dataset={"synthetic": {"n": 20000, "spectrum": list(SYNTHETIC_SPECTRUM), "seed": 0}},
            k=2, epsilons=[0.1], delta=0.01, n_grid=[1000, 5000, 20000])
    if name == "burnin":
        return ExperimentConfig(
            kind="burnin", experiment_id="burnin",
            dataset={"synthetic": {"n": 10_000, "spectrum": list(burnin_spectrum(50)),
                                   "seed": 0, "basis": "random-orthogonal"}},
            k=5, epsilons=[0.1], traces=5)
    if name == "bounds-figure":
        return ExperimentConfig(
            kind="bounds-figure", experiment_id="bounds_figure",
            epsilons=[0.01, 0.05, 0.1, 0.5, 1.0, 2.0], delta=0.01,
            bounds_d=[50, 100, 500, 1000],
            bounds_n=[int(round(x)) for x in np.logspace(2, 8, 25)])
    raise ConfigError(f"unknown preset {name!r}")


def burnin_spectrum(d: int, top: int = 5) -> np.ndarray:
    """Decaying spectrum with a dominant ``top``-dimensional block, trace 0.5."""
    lam = np.concatenate([np.linspace(0.3, 0.15, top), 0.02 * 0.9 ** np.arange(d - top)])
    return lam / lam.sum() * 0.5


@dataclass
class ResultRow:
    experiment_id: str
    mechanism: str
    n: int
    epsilon: float | None
    delta: float | None
    n_index: int
    eps_index: int
    subset: int
    trial: int
    seed: int
    q_f: float
    q_a: float | None
    wall_time: float
    error: str = ""
    schema_version: int = SCHEMA_VERSION


@dataclass
class ExperimentResult:
    kind: str
    rows: list[dict]
    summary: list[dict]
    metadata: dict
    fields: tuple[str, ...]
    summary_fields: tuple[str, ...] | None = None

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.rows if r.get("error"))


# ---------------------------------------------------------------------------
# data and seeds


def load_source(config: ExperimentConfig) -> DatasetMatrix:
    src = config.dataset
    if "path" in src:
        data, _ = load_dataset(src["path"], src["schema"])
        return data
    spec = dict(src.get("synthetic", {}))
    return synthetic_gaussian(
        n=int(spec.get("n", 5000)), spectrum=spec.get("spectrum", SYNTHETIC_SPECTRUM),
        seed=spec.get("seed", derive_seed(config.master_seed, config.experiment_id, "data")),
        basis=spec.get("basis", "identity"), clip=spec.get("clip", True))


def trial_seed(config: ExperimentConfig, mechanism: str, n_index: int, eps_index: int,
               trial: int) -> int:
    return derive_seed(config.master_seed, config.experiment_id, mechanism, n_index,
                       eps_index, trial)


def subset_seed(config: ExperimentConfig, n_index: int, subset: int) -> int:
    return derive_seed(config.master_seed, config.experiment_id, "subsample", n_index, subset)


# ---------------------------------------------------------------------------
# trial execution


def _run_mechanism(mech: str, data: DatasetMatrix, k: int, eps: float, delta: float,
                   seed: int, sampler: SamplerConfig) -> OrthonormalFrame:
    if mech == "exact":
        return run_exact(data, k).frame
    if mech == "modsulq":
        return run_modsulq(data, k, PrivacyParams(eps, delta), seed).frame
    if mech == "ppca":
        return run_ppca(data, k, PrivacyParams(eps), seed, sampler).frame
    if mech == "randproj":
        return run_random_projection(data.d, k, seed).frame
    raise ConfigError(f"unknown mechanism {mech!r}")


def _execute(task: dict) -> dict:
    """Run one trial; failures become rows carrying an error tag."""
    start = time.perf_counter()
    row = dict(task["row"])
    try:
        frame = _run_mechanism(row["mechanism"], task["data"], task["k"], row["epsilon"],
                               row["delta"], row["seed"], task["sampler"])
        a = task["score"]
        row["q_f"] = utility_qf(frame, a)
        row["q_a"] = utility_qa(frame, a) if frame.k == 1 else None
    except Exception as exc:  # recorded per row, never aborts the sweep
        row["q_f"] = float("nan")
        row["q_a"] = None
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = time.perf_counter() - start
    return row


def _map(tasks: list[dict], workers: int) -> list[dict]:
    if workers <= 1 or len(tasks) <= 1:
        return [_execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _row_template(config, mech, n, eps, delta, n_index, eps_index, subset, trial):
    return dataclasses.asdict(ResultRow(
        experiment_id=config.experiment_id, mechanism=mech, n=n,
        epsilon=None if mech in ("exact", "randproj") else eps,
        delta=delta if mech == "modsulq" else None,
        n_index=n_index, eps_index=eps_index, subset=subset, trial=trial,
        seed=trial_seed(config, mech, n_index, eps_index, trial),
        q_f=float("nan"), q_a=None, wall_time=0.0))


def _mechanism_tasks(config, data, score, n, n_index, subset, eps_list):
    sampler = config.sampler_config()
    tasks = []
    for mech in config.mechanisms:
        restarts = config.trials.get(mech, 1)
        eps_points = [(0, eps_list[0])] if mech in ("exact", "randproj") else list(enumerate(eps_list))
        for eps_index, eps in eps_points:
            for r in range(restarts):
                trial = subset * restarts + r
                row = _row_template(config, mech, n, eps, config.delta, n_index,
                                    eps_index, subset, trial)
                tasks.append({"row": row, "data": data, "score": score, "k": config.k,
                              "sampler": sampler})
    return tasks


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["mechanism"], r["n"], r["epsilon"]), []).append(r)
    out = []
    for (mech, n, eps), rs in sorted(groups.items(), key=lambda kv: (
            kv[0][0], kv[0][1], -1.0 if kv[0][2] is None else kv[0][2])):
        ok = [r for r in rs if not r.get("error")]
        qf = np.array([r["q_f"] for r in ok], dtype=float)
        qa = np.array([r["q_a"] for r in ok if r["q_a"] is not None], dtype=float)
        out.append({
            "schema_version": SCHEMA_VERSION, "experiment_id": rs[0]["experiment_id"],
            "mechanism": mech, "n": n, "epsilon": eps, "count": len(ok),
            "errors": len(rs) - len(ok),
            "q_f_mean": float(qf.mean()) if qf.size else float("nan"),
            "q_f_std": float(qf.std(ddof=1)) if qf.size > 1 else 0.0,
            "q_a_mean": float(qa.mean()) if qa.size else None,
            "q_a_std": float(qa.std(ddof=1)) if qa.size > 1 else None,
        })
    return out


def _metadata(config: ExperimentConfig, started: str, extra: dict | None = None) -> dict:
    meta = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "config": config.to_dict(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "aggregation": POOLING_NOTE,
    }
    meta.update(extra or {})
    return meta


def _sort_rows(rows):
    return sorted(rows, key=lambda r: (r["mechanism"], r["n_index"], r["eps_index"],
                                       r["subset"], r["trial"]))


def run_utility_vs_n(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    started = datetime.now(timezone.utc).isoformat()
    full = load_source(config)
    full_score = second_moment(full)
    tasks = []
    for n_index, n in enumerate(config.n_grid):
        if n > full.n:
            raise ConfigError(f"n={n} exceeds the dataset size {full.n}")
        for subset in range(config.subsample_repeats):
            sub = subsample(full, n, subset_seed(config, n_index, subset))
            score = full_score if config.evaluate_on == "full" else second_moment(sub)
            tasks += _mechanism_tasks(config, sub, score, n, n_index, subset, config.epsilons)
    rows = _sort_rows(_map(tasks, config.workers))
    meta = _metadata(config, started, {"dataset_d": full.d, "dataset_n": full.n,
                                       "provenance": full.provenance})
    return ExperimentResult("utility-vs-n", rows, summarize(rows), meta, RESULT_FIELDS,
                            SUMMARY_FIELDS)


def run_utility_vs_epsilon(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    started = datetime.now(timezone.utc).isoformat()
    data = load_source(config)
    score = second_moment(data)
    tasks = _mechanism_tasks(config, data, score, data.n, 0, 0, config.epsilons)
    rows = _sort_rows(_map(tasks, config.workers))
    meta = _metadata(config, started, {"dataset_d": data.d, "dataset_n": data.n,
                                       "provenance": data.provenance})
    return ExperimentResult(config.kind, rows, summarize(rows), meta, RESULT_FIELDS,
                            SUMMARY_FIELDS)


def rerun_row(config: ExperimentConfig, row: dict) -> dict:
    """Recompute a single long-form row from its coordinates."""
    data = load_source(config)
    full_score = second_moment(data)
    if config.kind == "utility-vs-n":
        sub = subsample(data, row["n"], subset_seed(config, row["n_index"], row["subset"]))
        score = full_score if config.evaluate_on == "full" else second_moment(sub)
        data = sub
    else:
        score = full_score
    eps = config.epsilons[row["eps_index"]]
    template = _row_template(config, row["mechanism"], row["n"], eps, config.delta,
                             row["n_index"], row["eps_index"], row["subset"], row["trial"])
    return _execute({"row": template, "data": data, "score": score, "k": config.k,
                     "sampler": config.sampler_config()})


def default_checkpoints(iterations: int, count: int = 60) -> list[int]:
    return sorted(set(int(round(x)) for x in np.geomspace(1, iterations, count)))


def mann_kendall_decreasing(values) -> tuple[float, float]:
    """Kendall tau of ``values`` against time and the one-sided p-value for a downward trend."""
    t = np.arange(len(values))
    res = stats.kendalltau(t, values, alternative="less")
    return float(res.statistic), float(res.pvalue)


def run_burnin_study(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    started = datetime.now(timezone.utc).isoformat()
    data = load_source(config)
    a = second_moment(data)
    eps = config.epsilons[0]
    param = BinghamParam(data.n * (eps / 2.0) * a.entries, config.k)
    sampler = config.sampler_config()
    checkpoints = config.checkpoints or default_checkpoints(sampler.iterations)
    rows, summary = [], []
    for i in range(config.traces):
        seed = derive_seed(config.master_seed, config.experiment_id, "burnin", i)
        trace = sample_matrix_bingham(param, iterations=sampler.iterations, thin=1, seed=seed,
                                      init="uniform", max_proposals=sampler.max_proposals)
        diag = burnin_statistic(trace, checkpoints)
        for t, f in diag.values:
            rows.append({"schema_version": SCHEMA_VERSION, "experiment_id": config.experiment_id,
                         "trace": i, "seed": seed, "T": t, "F": f,
                         "log_F": math.log(f) if f > 0 else float("-inf")})
        tau, p = mann_kendall_decreasing(diag.f)
        summary.append({"schema_version": SCHEMA_VERSION, "experiment_id": config.experiment_id,
                        "trace": i, "seed": seed, "F_final": float(diag.f[-1]),
                        "kendall_tau": tau, "trend_p": p,
                        "acceptance_rate": trace.diagnostics["acceptance_rate"]})
    meta = _metadata(config, started, {"traces": summary, "dataset_d": data.d,
                                       "dataset_n": data.n})
    return ExperimentResult("burnin", rows, summary, meta, BURNIN_FIELDS,
                            tuple(summary[0].keys()) if summary else None)


def run_bounds_figure(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    started = datetime.now(timezone.utc).isoformat()
    rows = []
    for d in config.bounds_d:
        for eps in config.epsilons:
            for n in config.bounds_n:
                res = modsulq_utility_bound(d, n, eps, config.delta)
                rows.append({"schema_version": SCHEMA_VERSION,
                             "experiment_id": config.experiment_id, "d": d, "epsilon": eps,
                             "delta": config.delta, "n": n, "bound": res.bound,
                             "phi": res.phi, "degenerate": res.degenerate})
    return ExperimentResult("bounds-figure", rows, [], _metadata(config, started),
                            BOUNDS_FIELDS)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    runners = {
        "utility-vs-n": run_utility_vs_n,
        "utility-vs-epsilon": run_utility_vs_epsilon,
        "single-run": run_utility_vs_epsilon,
        "burnin": run_burnin_study,
        "bounds-figure": run_bounds_figure,
    }
    config.validate()
    return runners[config.kind](config)


# ---------------------------------------------------------------------------
# output


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return buf.getvalue()


def resolve_output_dir(config: ExperimentConfig) -> Path:
    return Path(config.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "results")


def write_result(result: ExperimentResult, outdir, experiment_id: str) -> dict[str, Path]:
    outdir = Path(outdir)
    paths = {"trials": outdir / f"{experiment_id}_trials.csv",
             "meta": outdir / f"{experiment_id}_meta.json"}
    _atomic_write(paths["trials"], _csv_text(result.rows, result.fields))
    if result.summary and result.summary_fields:
        paths["summary"] = outdir / f"{experiment_id}_summary.csv"
        _atomic_write(paths["summary"], _csv_text(result.summary, result.summary_fields))
    _atomic_write(paths["meta"], json.dumps(result.metadata, indent=2, default=str))
    return paths
