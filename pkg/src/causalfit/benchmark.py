"""Simulation benchmark grid: scenarios x estimator configurations x replications."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import scipy

from . import __version__
from .crossfit import EstimatorConfig, estimate_effects
from .data import RngStream, ValidationError
from .dgm import DgmSpec, TruthRecord, generate, load_spec, true_ace
from .estimators import EstimationError
from .metrics import CSV_COLUMNS, EXTRA_COLUMNS, ReplicationRecord, compute_performance, flag_unstable

__all__ = ["Scenario", "EstimatorEntry", "BenchmarkConfig", "run_benchmark", "cached_truth",
           "REPLICATION_COLUMNS"]

TRUTH_SEED = 20240601
REPLICATION_COLUMNS = (
    "scenario", "n", "replication", "method", "library", "cf_folds", "psi", "se", "ci_low", "ci_high",
    "truth", "flags", "eif_mean", "arm_mean_1", "arm_mean_0", "y_min", "y_max", "sl_max_excess_risk",
    "error",
)


def _stable_int(text: str) -> int:
    return int(hashlib.sha256(text.encode()).hexdigest()[:8], 16)


@dataclass(frozen=True)
class Scenario:
    spec: DgmSpec
    n: int
    S: int
    beta: float | None = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def effect(self) -> float:
        return self.spec.beta(self.n) if self.beta is None else float(self.beta)

    @property
    def key(self) -> int:
        """Stable stream key: depends on the mechanism content and size, not on grid order."""
        return _stable_int(f"{self.spec.hash()}:{self.n}:{self.effect!r}")


@dataclass(frozen=True)
class EstimatorEntry:
    """Methods sharing one nuisance fit under one configuration."""

    methods: tuple[str, ...]
    config: EstimatorConfig
    label: str

    @property
    def key(self) -> int:
        return _stable_int(json.dumps(self.config.to_dict(), sort_keys=True))


@dataclass
class BenchmarkConfig:
    scenarios: list[Scenario]
    estimators: list[EstimatorEntry]
    seed: int = 1
    exclude_flagged: bool = False
    workers: int = 1
    truth_N: int = 5_000_000
    truth_cache: str | None = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.scenarios or not self.estimators:
            raise ValidationError("benchmark grid is empty")
        for s in self.scenarios:
            if s.S < 2:
                raise ValidationError(f"scenario {s.name} n={s.n}: S >= 2 replications required")
            if s.n < 4:
                raise ValidationError(f"scenario {s.name}: n >= 4 required")
        labels = [(e.label, e.config.crossfit, m) for e in self.estimators for m in e.methods]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate (method, configuration) in benchmark grid")

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "BenchmarkConfig":
        d = dict(d)
        try:
            scenarios = []
            for s in d["scenarios"]:
                ref = s["spec"]
                if base_dir is not None and isinstance(ref, str) and ref.endswith(".json") \
                        and not Path(ref).is_absolute():
                    ref = str(base_dir / ref)
                spec = load_spec(ref)
                sizes = s["n"] if isinstance(s["n"], list) else [s["n"]]
                for n in sizes:
                    scenarios.append(Scenario(spec, int(n), int(s["S"]), s.get("beta")))
            estimators = []
            for e in d["estimators"]:
                methods = e.get("methods", e.get("method", ["AIPW", "TMLE"]))
                methods = tuple(m.upper() for m in ([methods] if isinstance(methods, str) else methods))
                cfs = e.get("crossfit", [None])
                cfs = cfs if isinstance(cfs, list) else [cfs]
                for cf in cfs:
                    sub = {k: v for k, v in e.items() if k not in ("methods", "method", "crossfit", "label")}
                    sub.setdefault("sl_folds", d.get("sl_folds", 10))
                    if "truncation" in d and "truncation" not in sub:
                        sub["truncation"] = d["truncation"]
                    cfg = EstimatorConfig.from_dict({**sub, "crossfit": cf, "method": methods[0]})
                    estimators.append(EstimatorEntry(methods, cfg, e.get("label", cfg.label)))
        except KeyError as exc:
            raise ValidationError(f"benchmark config missing key {exc}") from exc
        return cls(scenarios, estimators, int(d.get("seed", 1)), bool(d.get("exclude_flagged", False)),
                   int(d.get("workers", 1)), int(d.get("truth_N", 5_000_000)), d.get("truth_cache"), d)

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ValidationError(f"file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"benchmark config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def hash(self) -> str:
        doc = {
            "scenarios": [[s.spec.hash(), s.n, s.S, s.effect] for s in self.scenarios],
            "estimators": [[list(e.methods), e.config.to_dict(), e.label] for e in self.estimators],
            "seed": self.seed,
            "truth_N": self.truth_N,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# ----------------------------------------------------------------------- truth


def _cache_dir(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("CAUSALFIT_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "causalfit"


def cached_truth(spec: DgmSpec, beta: float, N: int = 5_000_000, cache: str | None = None) -> TruthRecord:
    """True effect for ``spec`` at ``beta``, memoised on disk by mechanism hash, beta and N."""
    d = _cache_dir(cache)
    key = hashlib.sha256(f"{spec.hash()}:{beta!r}:{N}:{TRUTH_SEED}".encode()).hexdigest()[:24]
    path = d / f"truth-{spec.name}-{key}.json"
    if path.exists():
        doc = json.loads(path.read_text())
        return TruthRecord(doc["spec"], doc["psi"], doc["N"], doc["mcse"], doc["beta"], doc["spec_hash"])
    rec = true_ace(spec, N, RngStream(TRUTH_SEED), beta=beta)
    try:
        d.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(rec.to_dict(), indent=1))
        tmp.replace(path)
    except OSError:
        pass  # caching is an optimisation only
    return rec


# ----------------------------------------------------------------- replication


def _run_replication(args) -> list[dict]:
    """All estimator entries on one simulated dataset (one worker task)."""
    scenario, estimators, seed, r, truth = args
    stream = RngStream(seed, r, (scenario.key,))
    data = generate(scenario.spec, scenario.n, stream.child(0), beta=scenario.effect)
    y_min, y_max = float(data.Y.min()), float(data.Y.max())
    rows = []
    for entry in estimators:
        base = {"scenario": scenario.name, "n": scenario.n, "replication": r, "library": entry.label,
                "cf_folds": entry.config.crossfit, "truth": truth, "y_min": y_min, "y_max": y_max}
        try:
            res = estimate_effects(data, entry.config, entry.methods, rng=stream.child(1, entry.key))
        except (EstimationError, ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            for m in entry.methods:
                rows.append({**base, "method": m, "psi": math.nan, "se": None, "ci_low": None,
                             "ci_high": None, "flags": ["failed"], "error": f"{type(exc).__name__}: {exc}"})
            continue
        for m in entry.methods:
            e = res[m]
            diag = e.diagnostics
            arms = diag.get("targeted_means", [None, None])
            rows.append({**base, "method": m, "psi": e.psi, "se": e.se,
                         "ci_low": None if e.ci is None else e.ci[0],
                         "ci_high": None if e.ci is None else e.ci[1],
                         "flags": list(e.flags), "eif_mean": diag.get("eif_mean_centered"),
                         "arm_mean_1": arms[0], "arm_mean_0": arms[1],
                         "sl_max_excess_risk": diag.get("sl_max_excess_risk"), "error": ""})
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def _csv(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _sort_key(row: Mapping):
    cf = row["cf_folds"]
    return (row["scenario"], row["n"], row["library"], -1 if cf is None else cf, row["method"], row["replication"])


def run_benchmark(config: BenchmarkConfig, out_dir, workers: int | None = None, progress=None) -> dict:
    """Run the grid and write ``replications.csv``, ``performance.csv`` and ``manifest.json``.

    Every (scenario, replication) draws from its own stream keyed by the
    replication index, so results do not depend on worker count or order.
    Failed fits are recorded with a ``failed`` flag; the grid never aborts.
    Returns the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = config.workers if workers is None else workers
    truths = {}
    for s in config.scenarios:
        truths[(s.name, s.n)] = cached_truth(s.spec, s.effect, config.truth_N, config.truth_cache)
    tasks = [(s, config.estimators, config.seed, r, truths[(s.name, s.n)].psi)
             for s in config.scenarios for r in range(s.S)]
    rows: list[dict] = []
    if workers <= 1:
        for i, t in enumerate(tasks):
            rows.extend(_run_replication(t))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in enumerate(pool.map(_run_replication, tasks, chunksize=1)):
                rows.extend(res)
                if progress:
                    progress(i + 1, len(tasks))
    rows.sort(key=_sort_key)

    records = [ReplicationRecord(r["scenario"], r["replication"], r["method"], r["library"], r["cf_folds"],
                                 r["n"], r["psi"], r["se"], r["ci_low"], r["ci_high"], r["flags"])
               for r in rows]
    flag_unstable(records)
    for rec, row in zip(records, rows):
        row["flags"] = rec.flags
    (out / "replications.csv").write_text(_csv(rows, REPLICATION_COLUMNS))

    perf_rows = []
    groups: dict[tuple, list[ReplicationRecord]] = {}
    for rec in records:
        groups.setdefault((rec.scenario, rec.n, rec.library, rec.cf_folds, rec.method), []).append(rec)
    for (name, n, _, _, _), recs in sorted(groups.items(), key=lambda kv: _group_sort(kv[0])):
        for excl in (False, True):
            try:
                rep = compute_performance(recs, truths[(name, n)].psi, exclude_flagged=excl)
                perf_rows.append(rep.to_row())
            except ValueError as exc:
                perf_rows.append({"scenario": name, "method": recs[0].method, "library": recs[0].library,
                                  "cf_folds": recs[0].cf_folds, "n": n, "S": 0, "excluded": len(recs),
                                  "exclude_flagged": excl, "total": len(recs), "error": str(exc)})
    for row in perf_rows:
        if row.get("cf_folds") is None:
            row["cf_folds"] = "none"
    (out / "performance.csv").write_text(_csv(perf_rows, CSV_COLUMNS + EXTRA_COLUMNS))

    failed = sum("failed" in r["flags"] for r in rows)
    manifest = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "exclude_flagged": config.exclude_flagged,
        "scenarios": [{"spec": s.name, "spec_hash": s.spec.hash(), "n": s.n, "S": s.S, "beta": s.effect,
                       "stream_key": s.key, "truth": truths[(s.name, s.n)].to_dict()}
                      for s in config.scenarios],
        "estimators": [{"label": e.label, "methods": list(e.methods), "config": e.config.to_dict(),
                        "stream_key": e.key} for e in config.estimators],
        "records": len(rows),
        "failed": failed,
        "flagged": sum(r.unstable for r in records),
        "versions": {"causalfit": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _group_sort(key):
    name, n, lib, cf, method = key
    return (name, n, lib, -1 if cf is None else cf, method)


def performance_table(out_dir, exclude_flagged: bool = False) -> list[dict[str, Any]]:
    """Read ``performance.csv`` rows for one exclusion mode."""
    with open(Path(out_dir) / "performance.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    want = "true" if exclude_flagged else "false"
    return [r for r in rows if r["exclude_flagged"] == want]
