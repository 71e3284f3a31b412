"""Simulation performance measures with Monte Carlo standard errors, and instability flags."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ReplicationRecord",
    "PerformanceReport",
    "CSV_COLUMNS",
    "unstable_mask",
    "flag_unstable",
    "compute_performance",
    "coverage_mcse",
]

CSV_COLUMNS = (
    "scenario", "method", "library", "cf_folds", "n", "S", "excluded",
    "bias", "bias_mcse", "relbias_pct", "empse", "empse_mcse", "modse",
    "modse_relerr_pct", "modse_relerr_mcse", "coverage_pct", "coverage_mcse",
)
# appended after the fixed columns
EXTRA_COLUMNS = ("exclude_flagged", "total", "flagged", "relbias_mcse")

SE_FACTOR = 10.0
PSI_FACTOR = 5.0


@dataclass
class ReplicationRecord:
    """One estimate from one replication; never deleted, only flagged."""

    scenario: str
    replication: int
    method: str
    library: str
    cf_folds: int | None
    n: int
    psi: float
    se: float | None
    ci_low: float | None
    ci_high: float | None
    flags: list[str] = field(default_factory=list)

    @property
    def config(self) -> tuple:
        return (self.scenario, self.n, self.method, self.library, self.cf_folds)

    @property
    def unstable(self) -> bool:
        return bool({"unstable", "nonfinite", "failed"} & set(self.flags))

    def to_row(self) -> dict:
        d = asdict(self)
        d["cf_folds"] = "none" if self.cf_folds is None else self.cf_folds
        d["flags"] = ";".join(self.flags)
        return d


def unstable_mask(psi, se=None) -> np.ndarray:
    """Records whose SE exceeds 10x the median SE or whose |psi| exceeds 5x |median psi|.

    Non-finite values are always flagged; medians use the finite records.
    """
    psi = np.asarray(psi, dtype=float)
    finite = np.isfinite(psi)
    flag = ~finite
    if se is not None:
        se = np.asarray(se, dtype=float)
        finite_se = np.isfinite(se)
        flag |= ~finite_se
        if finite_se.any():
            flag |= finite_se & (se > SE_FACTOR * np.median(se[finite_se]))
    if finite.any():
        flag |= finite & (np.abs(psi) > PSI_FACTOR * abs(np.median(psi[finite])))
    return flag


def flag_unstable(records: Sequence[ReplicationRecord]) -> list[bool]:
    """Flag each record against the medians of its (scenario, n, method, library, folds) group.

    Records gain an ``"unstable"`` flag in place; the returned list mirrors it.
    """
    out = [False] * len(records)
    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.config, []).append(i)
    for idx in groups.values():
        if len(idx) < 3:
            continue
        psi = [records[i].psi for i in idx]
        ses = [records[i].se for i in idx]
        has_se = all(s is not None for s in ses)
        mask = unstable_mask(psi, ses if has_se else None)
        for i, m in zip(idx, mask):
            if m:
                out[i] = True
                if "unstable" not in records[i].flags:
                    records[i].flags.append("unstable")
    return out


def coverage_mcse(coverage: float, S: int) -> float:
    """Monte Carlo SE of a coverage proportion, in percentage points."""
    return math.sqrt(coverage * (1 - coverage) / S) * 100


@dataclass
class PerformanceReport:
    scenario: str
    method: str
    library: str
    cf_folds: int | None
    n: int
    S: int
    excluded: int
    bias: float
    bias_mcse: float
    relbias_pct: float | None
    empse: float
    empse_mcse: float
    modse: float | None
    modse_relerr_pct: float | None
    modse_relerr_mcse: float | None
    coverage_pct: float | None
    coverage_mcse: float | None
    exclude_flagged: bool = False
    total: int = 0
    flagged: int = 0
    relbias_mcse: float | None = None

    def to_row(self) -> dict:
        d = asdict(self)
        d["cf_folds"] = "none" if self.cf_folds is None else self.cf_folds
        return {k: d[k] for k in CSV_COLUMNS + EXTRA_COLUMNS}


def compute_performance(records: Iterable[ReplicationRecord], truth: float, exclude_flagged: bool = False,
                        ) -> PerformanceReport:
    """Bias, empirical and model SE, SE relative error and Wald coverage, each with its MCSE.

    Records must share one (scenario, n, method, library, folds) configuration.
    Average model SE is the root mean of the squared SEs. Relative bias is
    ``None`` when the truth is zero. Failed or non-finite records are never
    usable; unstable ones are dropped only if ``exclude_flagged``.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    if len({r.config for r in records}) > 1:
        raise ValueError("records mix several configurations")
    truth = float(truth)
    usable = [r for r in records
              if "failed" not in r.flags and "nonfinite" not in r.flags and math.isfinite(r.psi)
              and not (exclude_flagged and r.unstable)]
    S = len(usable)
    if S < 2:
        raise ValueError(f"need at least 2 usable records, got {S}")
    flagged = sum(r.unstable for r in records)
    psi = np.array([r.psi for r in usable])
    bias = float(psi.mean() - truth)
    empse = float(psi.std(ddof=1))
    bias_mcse = empse / math.sqrt(S)
    empse_mcse = empse / math.sqrt(2 * (S - 1))
    relbias = None if truth == 0 else 100 * bias / truth
    relbias_mcse = None if truth == 0 else 100 * bias_mcse / abs(truth)

    modse = relerr = relerr_mcse = cov = cov_mcse = None
    if all(r.se is not None for r in usable):
        se = np.array([r.se for r in usable], dtype=float)
        var = se ** 2
        modse = float(math.sqrt(var.mean()))
        if empse > 0:
            relerr = 100 * (modse / empse - 1)
            relerr_mcse = 100 * (modse / empse) * math.sqrt(
                float(var.var(ddof=1)) / (4 * S * modse ** 4) + 1 / (2 * (S - 1))
            ) if modse > 0 else None
        lo = np.array([r.ci_low for r in usable], dtype=float)
        hi = np.array([r.ci_high for r in usable], dtype=float)
        c = float(np.mean((lo <= truth) & (truth <= hi)))
        cov, cov_mcse = 100 * c, coverage_mcse(c, S)

    r0 = records[0]
    return PerformanceReport(
        r0.scenario, r0.method, r0.library, r0.cf_folds, r0.n, S, len(records) - S,
        bias, bias_mcse, relbias, empse, empse_mcse, modse, relerr, relerr_mcse, cov, cov_mcse,
        exclude_flagged, len(records), flagged, relbias_mcse,
    )
