"""Datasets, fold plans and reproducible random streams."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "ValidationError",
    "Dataset",
    "FoldPlan",
    "RngStream",
    "rng_stream",
    "load_dataset",
    "load_schema",
    "make_folds",
    "stratified_assignment",
]

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class ValidationError(ValueError):
    """Raised when input data or configuration violates a documented contract."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Complete-case observational data: confounders ``W``, binary exposure ``X``, outcome ``Y``.

    ``continuous`` flags which confounder columns are continuous; 0/1 columns
    (including one-hot dummies) are flagged ``False``.
    """

    W: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    w_names: tuple[str, ...]
    continuous: tuple[bool, ...]
    exposure_name: str = "X"
    outcome_name: str = "Y"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        X = np.asarray(self.X, dtype=float).ravel()
        Y = np.asarray(self.Y, dtype=float).ravel()
        n, p = W.shape
        if n < 4:
            raise ValidationError(f"need at least 4 records, got {n}")
        if p < 1:
            raise ValidationError("need at least one confounder")
        if X.shape[0] != n or Y.shape[0] != n:
            raise ValidationError("W, X and Y must have the same number of records")
        for name, arr in (("W", W), ("X", X), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"missing value or non-finite entry in {name}")
        if not np.all((X == 0) | (X == 1)):
            raise ValidationError("exposure not binary: values must be 0 or 1")
        n1 = int(X.sum())
        if n1 < 2 or n - n1 < 2:
            raise ValidationError(
                f"need at least 2 records per exposure arm, got {n1} exposed and {n - n1} unexposed"
            )
        if len(self.w_names) != p or len(self.continuous) != p:
            raise ValidationError("schema length does not match confounder matrix width")
        object.__setattr__(self, "W", _frozen(W))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))
        object.__setattr__(self, "w_names", tuple(self.w_names))
        object.__setattr__(self, "continuous", tuple(bool(c) for c in self.continuous))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    @classmethod
    def from_arrays(cls, W, X, Y, w_names: Sequence[str] | None = None) -> "Dataset":
        """Build a dataset, inferring continuous vs 0/1 columns from the values."""
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        names = tuple(w_names) if w_names is not None else tuple(f"w{j + 1}" for j in range(W.shape[1]))
        continuous = tuple(not np.all((W[:, j] == 0) | (W[:, j] == 1)) for j in range(W.shape[1]))
        return cls(W, X, Y, names, continuous)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.W[idx], self.X[idx], self.Y[idx], self.w_names, self.continuous,
                       self.exposure_name, self.outcome_name)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.W, columns=list(self.w_names))
        df.insert(0, self.exposure_name, self.X.astype(int))
        df.insert(0, self.outcome_name, self.Y)
        return df


class RngStream:
    """Counter-based random stream identified by ``(root_seed, stream_id, *path)``.

    Streams are derived through :class:`numpy.random.SeedSequence` spawn keys and
    drive a Philox generator, so a stream's draws depend only on its identity,
    never on how many other streams were created or consumed before it.
    A stream is single-owner; give each concurrent task its own :meth:`child`.
    """

    def __init__(self, root_seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        if root_seed < 0 or stream_id < 0 or any(p < 0 for p in path):
            raise ValueError("seeds and stream ids must be non-negative integers")
        self.root_seed = int(root_seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream_id, *self.path))
        self.gen = np.random.Generator(np.random.Philox(seq))

    def child(self, *ids: int) -> "RngStream":
        """Independent sub-stream; unaffected by draws already taken from ``self``."""
        return RngStream(self.root_seed, self.stream_id, self.path + tuple(ids))

    def random(self, size=None):
        return self.gen.random(size)

    def seed_int(self) -> int:
        """A 31-bit integer seed for code that keeps its own generator state."""
        return int(self.gen.integers(0, 2**31 - 1))

    def __repr__(self) -> str:
        return f"RngStream(root_seed={self.root_seed}, stream_id={self.stream_id}, path={self.path})"


def rng_stream(root_seed: int, stream_id: int) -> RngStream:
    return RngStream(root_seed, stream_id)


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of records to ``K`` folds; fold labels are ``0..K-1``."""

    K: int
    assignment: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).ravel()
        if self.K < 2:
            raise ValidationError("K >= 2 folds required")
        if a.size and (a.min() < 0 or a.max() >= self.K):
            raise ValidationError("fold labels must lie in 0..K-1")
        if a.size and np.bincount(a, minlength=self.K).min() == 0:
            raise ValidationError("every fold must contain at least one record")
        object.__setattr__(self, "assignment", _frozen(a))

    @property
    def n(self) -> int:
        return self.assignment.size

    def test_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def train_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)


def stratified_assignment(strata: np.ndarray, K: int, gen: np.random.Generator) -> np.ndarray:
    """Random fold labels balanced within each stratum and overall.

    Each stratum is shuffled and dealt round-robin; the dealing position carries
    over between strata so overall fold sizes also differ by at most one.
    """
    strata = np.asarray(strata).ravel()
    out = np.empty(strata.size, dtype=np.int64)
    offset = 0
    for level in np.unique(strata):
        idx = np.flatnonzero(strata == level)
        idx = idx[gen.permutation(idx.size)]
        out[idx] = (offset + np.arange(idx.size)) % K
        offset = (offset + idx.size) % K
    return out


def make_folds(n: int, X, K: int, rng: RngStream) -> FoldPlan:
    """Exposure-stratified random K-fold split of ``n`` records."""
    X = np.asarray(X).ravel()
    if X.size != n:
        raise ValidationError("exposure vector length does not match n")
    if K < 2:
        raise ValidationError("K >= 2 folds required")
    n1 = int(np.sum(X == 1))
    smallest = min(n1, n - n1)
    if K > smallest:
        raise ValidationError(f"K={K} exceeds the smaller exposure-arm count {smallest}")
    return FoldPlan(K, stratified_assignment(X, K, rng.gen), seed=rng.root_seed)


# ---------------------------------------------------------------- CSV ingestion


def load_schema(path_or_obj) -> dict:
    if isinstance(path_or_obj, Mapping):
        schema = dict(path_or_obj)
    else:
        try:
            schema = json.loads(Path(path_or_obj).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"schema is not valid JSON: {exc}") from exc
    for key in ("outcome", "exposure", "confounders"):
        if key not in schema:
            raise ValidationError(f"schema missing '{key}'")
    schema.setdefault("categorical", [])
    unknown = set(schema["categorical"]) - set(schema["confounders"])
    if unknown:
        raise ValidationError(f"categorical columns not listed as confounders: {sorted(unknown)}")
    return schema


def load_dataset(path, schema) -> Dataset:
    """Read a complete-case CSV and validate it against ``schema``.

    ``schema`` is a mapping (or path to JSON) with keys ``outcome``,
    ``exposure``, ``confounders`` and optional ``categorical``. Categorical
    confounders are one-hot encoded with the first sorted level as reference.
    """
    schema = load_schema(schema)
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    needed = [schema["outcome"], schema["exposure"], *schema["confounders"]]
    missing_cols = [c for c in needed if c not in raw.columns]
    if missing_cols:
        raise ValidationError(f"columns not found in header: {missing_cols}")

    categorical = set(schema["categorical"])
    parsed: dict[str, np.ndarray] = {}
    for col in needed:
        cells = raw[col].str.strip()
        miss = cells.str.lower().isin(_MISSING_TOKENS).to_numpy()
        if miss.any():
            row = int(np.flatnonzero(miss)[0]) + 2  # 1-based, header is line 1
            raise ValidationError(f"missing value in column '{col}' at line {row}")
        if col in categorical:
            parsed[col] = cells.to_numpy()
            continue
        values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 2
            raise ValidationError(
                f"non-numeric cell {cells.iloc[row - 2]!r} in column '{col}' at line {row}"
            )
        parsed[col] = values

    x = parsed[schema["exposure"]]
    if not np.all((x == 0) | (x == 1)):
        bad = x[(x != 0) & (x != 1)][0]
        raise ValidationError(f"exposure not binary: found value {bad:g} in '{schema['exposure']}'")

    columns, names, continuous = [], [], []
    for col in schema["confounders"]:
        v = parsed[col]
        if col in categorical:
            levels = sorted(set(v.tolist()), key=_level_key)
            for level in levels[1:]:
                columns.append((v == level).astype(float))
                names.append(f"{col}={level}")
                continuous.append(False)
        else:
            columns.append(v)
            names.append(col)
            continuous.append(not np.all((v == 0) | (v == 1)))
    W = np.column_stack(columns) if columns else np.empty((len(raw), 0))
    return Dataset(W, x, parsed[schema["outcome"]], tuple(names), tuple(continuous),
                   exposure_name=schema["exposure"], outcome_name=schema["outcome"])


def _level_key(level: str):
    try:
        return (0, float(level), level)
    except ValueError:
        return (1, 0.0, level)
