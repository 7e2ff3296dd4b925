"""Recall metrics, ground-truth construction, and run reports.

Two tolerance regimes are supported: sequence-index tolerance (a
recognition counts if the returned reference is within v positions of a
ground-truth index) and metric tolerance (the returned reference must
lie within a distance threshold of the query's true position). Metric
ground truth is built with a nearest-reference rule that drops queries
with no reference within 5 m; dropped queries are reported and excluded
from every denominator.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .pipeline import RankedResult
from .store import DatasetManifest

DEFAULT_INDEX_TOLERANCES = (1.0, 2.0, 5.0)
DEFAULT_METER_TOLERANCES = (25.0,)
DEFAULT_N_VALUES = (1, 5, 10)
GT_MAX_DIST = 5.0  # nearest-reference cutoff for metric ground truth


@dataclass(frozen=True)
class ToleranceSpec:
    mode: str = "index"  # "index" | "meters"
    values: tuple[float, ...] = DEFAULT_INDEX_TOLERANCES

    def __post_init__(self):
        if self.mode not in ("index", "meters"):
            raise ConfigError(f"mode must be 'index' or 'meters', got {self.mode!r}")
        if not self.values:
            raise ConfigError("tolerance values must be non-empty")
        if any(not v > 0 for v in self.values):
            raise ConfigError(f"tolerance values must be positive: {self.values}")
        if list(self.values) != sorted(self.values):
            raise ConfigError(f"tolerance values must ascend: {self.values}")

    @staticmethod
    def index(values: Sequence[float] = DEFAULT_INDEX_TOLERANCES) -> "ToleranceSpec":
        return ToleranceSpec("index", tuple(float(v) for v in values))

    @staticmethod
    def meters(values: Sequence[float] = DEFAULT_METER_TOLERANCES) -> "ToleranceSpec":
        return ToleranceSpec("meters", tuple(float(v) for v in values))


@dataclass(frozen=True)
class MetricGroundTruth:
    """Nearest reference per query with the 5 m drop rule applied."""

    query_ids: tuple[str, ...]
    query_positions: np.ndarray  # (m, 2) float64
    nearest: np.ndarray  # (m,) int64 nearest reference index
    distance: np.ndarray  # (m,) float64 to that reference
    kept: np.ndarray  # (m,) bool: distance <= max_dist
    max_dist: float

    @property
    def dropped_ids(self) -> tuple[str, ...]:
        return tuple(qid for qid, keep in zip(self.query_ids, self.kept)
                     if not keep)

    def gt_index(self, query_id: str) -> int:
        i = self.query_ids.index(query_id)
        if not self.kept[i]:
            raise ContractError(f"query {query_id!r} was dropped by the "
                                f"{self.max_dist} m rule")
        return int(self.nearest[i])


def build_ground_truth_metric(ref_positions: np.ndarray,
                              query_positions: np.ndarray,
                              query_ids: Sequence[str] | None = None,
                              max_dist: float = GT_MAX_DIST) -> MetricGroundTruth:
    """Match each query to its nearest reference by planar distance.

    Queries farther than ``max_dist`` from every reference are marked
    dropped (kept=False) rather than matched to something wrong. Ties
    go to the lowest reference index.
    """
    refs = np.asarray(ref_positions, dtype=np.float64)
    qs = np.asarray(query_positions, dtype=np.float64)
    if refs.ndim != 2 or refs.shape[0] == 0 or refs.shape[1] != 2:
        raise ContractError(f"need a non-empty (n, 2) reference position "
                            f"array, got shape {refs.shape}")
    if qs.ndim != 2 or qs.shape[1] != 2:
        raise ContractError(f"query positions must be (m, 2), got {qs.shape}")
    if not (np.isfinite(refs).all() and np.isfinite(qs).all()):
        raise ContractError("positions must be finite")

    diff = qs[:, None, :] - refs[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    nearest = np.argmin(d, axis=1).astype(np.int64)  # first minimum wins ties
    distance = d[np.arange(len(qs)), nearest]
    ids = tuple(query_ids) if query_ids is not None else tuple(
        f"q{i}" for i in range(len(qs)))
    if len(ids) != len(qs):
        raise ContractError(f"{len(ids)} query ids for {len(qs)} positions")
    return MetricGroundTruth(ids, qs, nearest, distance,
                             distance <= max_dist, float(max_dist))


def recall_at_1(results: Sequence[RankedResult],
                gt: Mapping[str, Sequence[int]],
                tol: ToleranceSpec) -> dict[float, float]:
    """Index-tolerance recall of the rank-1 entry, per tolerance value.

    A query counts at tolerance v when min over its ground-truth
    indices g of |rank1 - g| is <= v. Returns raw percentages; an empty
    result list yields an empty mapping (recall undefined).
    """
    if tol.mode != "index":
        raise ConfigError("recall_at_1 requires an index-mode ToleranceSpec")
    if not results:
        return {}
    offsets = []
    for result in results:
        if result.query_id not in gt:
            raise ContractError(f"no ground truth for query {result.query_id!r}")
        indices = gt[result.query_id]
        if not indices:
            raise ContractError(f"empty ground truth for {result.query_id!r}")
        offsets.append(min(abs(result.best_index - g) for g in indices))
    arr = np.asarray(offsets, dtype=np.float64)
    return {v: float(100.0 * np.mean(arr <= v)) for v in tol.values}


def recall_at_n(results: Sequence[RankedResult], ref_positions: np.ndarray,
                gt: MetricGroundTruth,
                n_values: Sequence[int] = DEFAULT_N_VALUES,
                threshold: float = DEFAULT_METER_TOLERANCES[0]) -> dict[int, float]:
    """Metric recall: top-N must contain a reference within ``threshold``.

    Only queries kept by the ground-truth drop rule enter the
    denominator. Returns raw percentages keyed by N; empty kept set
    yields an empty mapping.
    """
    refs = np.asarray(ref_positions, dtype=np.float64)
    kept_ids = {qid for qid, keep in zip(gt.query_ids, gt.kept) if keep}
    pos_of = dict(zip(gt.query_ids, gt.query_positions))
    evaluated = [r for r in results if r.query_id in kept_ids]
    if not evaluated:
        return {}
    out: dict[int, float] = {}
    for n in n_values:
        hits = 0
        for result in evaluated:
            qpos = pos_of[result.query_id]
            top = result.top_indices(n)
            d = np.linalg.norm(refs[top] - qpos[None, :], axis=1)
            hits += bool((d <= threshold).any())
        out[int(n)] = 100.0 * hits / len(evaluated)
    return out


class FailureRecord(NamedTuple):
    query_id: str
    rank1: int
    gt_indices: tuple[int, ...]
    passed: dict  # tolerance value -> bool


@dataclass(frozen=True)
class EvalReport:
    """Everything the report files need, minus any wall-clock times.

    Timing summaries live in ``timings`` only when a timed (bench) run
    produced them; the deterministic JSON report never includes them.
    """

    scorer: str
    tolerance: ToleranceSpec
    recalls: dict[str, float]  # display key -> raw percentage
    n_queries: int  # evaluated (kept) queries
    n_dropped: int
    dropped_ids: tuple[str, ...]
    per_sequence: dict[str, dict[str, float]]
    database_bytes: int
    failures: tuple[FailureRecord, ...]
    timings: dict[str, dict[str, float]] | None = field(default=None, compare=False)

    def __post_init__(self):
        for key, value in self.recalls.items():
            if not 0.0 <= value <= 100.0:
                raise ContractError(f"recall {key}={value} outside [0, 100]")


def _tolerance_key(tol: ToleranceSpec, value: float) -> str:
    if tol.mode == "index":
        return f"tol_{value:g}"
    return f"within_{value:g}m"


def _index_failures(results: Sequence[RankedResult],
                    gt: Mapping[str, Sequence[int]],
                    tol: ToleranceSpec) -> tuple[FailureRecord, ...]:
    records = []
    for result in results:
        indices = tuple(gt[result.query_id])
        off = min(abs(result.best_index - g) for g in indices)
        passed = {v: off <= v for v in tol.values}
        if not all(passed.values()):
            records.append(FailureRecord(result.query_id, result.best_index,
                                         indices, passed))
    return tuple(records)


def evaluate_results(results: Sequence[RankedResult],
                     manifest: DatasetManifest, scorer: str,
                     tolerance: ToleranceSpec | None = None,
                     n_values: Sequence[int] = DEFAULT_N_VALUES,
                     database_bytes: int = 0) -> EvalReport:
    """Aggregate per-query results into an :class:`EvalReport`.

    Index-mode manifests use ground-truth indices as given; meters-mode
    manifests first build metric ground truth from positions (dropping
    far queries), then report Recall@N at the metric thresholds.
    Pure: same results in, same report out.
    """
    results = sorted(results, key=lambda r: r.query_id)
    if manifest.tolerance_unit == "sequence_index":
        tol = tolerance or ToleranceSpec.index()
        raw = recall_at_1(results, manifest.ground_truth, tol)
        recalls = {_tolerance_key(tol, v): raw.get(v, 0.0) for v in tol.values}
        per_sequence = {}
        for label, qids in sorted(manifest.sequences.items()):
            subset = [r for r in results if r.query_id in set(qids)]
            sub = recall_at_1(subset, manifest.ground_truth, tol)
            per_sequence[label] = {_tolerance_key(tol, v): sub.get(v, 0.0)
                                   for v in tol.values}
        failures = _index_failures(results, manifest.ground_truth, tol)
        return EvalReport(scorer, tol, recalls, len(results), 0, (),
                          per_sequence, database_bytes, failures)

    tol = tolerance or ToleranceSpec.meters()
    refs = np.asarray([manifest.positions[rid] for rid in manifest.reference_ids])
    q_ids = [r.query_id for r in results]
    qs = np.asarray([manifest.positions[qid] for qid in q_ids])
    gt = build_ground_truth_metric(refs, qs, q_ids)
    kept = [r for r in results if r.query_id not in set(gt.dropped_ids)]
    recalls = {}
    failures: list[FailureRecord] = []
    for threshold in tol.values:
        raw = recall_at_n(results, refs, gt, n_values, threshold)
        for n in n_values:
            recalls[f"recall_at_{n}_{threshold:g}m"] = raw.get(int(n), 0.0)
    if kept:
        for result in kept:
            gt_idx = gt.gt_index(result.query_id)
            qpos = np.asarray(manifest.positions[result.query_id])
            d1 = float(np.linalg.norm(refs[result.best_index] - qpos))
            passed = {v: d1 <= v for v in tol.values}
            if not all(passed.values()):
                failures.append(FailureRecord(result.query_id,
                                              result.best_index,
                                              (gt_idx,), passed))
    return EvalReport(scorer, tol, recalls, len(kept), len(gt.dropped_ids),
                      gt.dropped_ids, {}, database_bytes, tuple(failures))


def summarize_timings(results: Sequence[RankedResult]) -> dict[str, dict[str, float]]:
    """Mean and 95th percentile per stage over all timed results."""
    timed = [r for r in results if r.timings]
    if not timed:
        return {}
    stages = sorted({k for r in timed for k in r.timings})
    out = {}
    for stage in stages:
        values = np.asarray([r.timings.get(stage, 0.0) for r in timed])
        out[stage] = {"mean": float(values.mean()),
                      "p95": float(np.percentile(values, 95))}
    return out


def report_to_json(report: EvalReport) -> str:
    """Deterministic JSON body for report.json (never includes timings)."""
    doc = {
        "scorer": report.scorer,
        "tolerance_mode": report.tolerance.mode,
        "tolerance_values": list(report.tolerance.values),
        "recalls": report.recalls,
        "queries_evaluated": report.n_queries,
        "queries_dropped": report.n_dropped,
        "dropped_ids": list(report.dropped_ids),
        "per_sequence": report.per_sequence,
        "database_bytes": report.database_bytes,
        "failures": [
            {"query_id": f.query_id, "rank1": f.rank1,
             "gt_indices": list(f.gt_indices),
             "passed": {str(k): bool(v) for k, v in f.passed.items()}}
            for f in report.failures
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def report_to_text(report: EvalReport) -> str:
    """Aligned human-readable table (recalls, sizes, optional timings)."""
    lines = [f"scorer: {report.scorer}",
             f"queries evaluated: {report.n_queries}"
             + (f" (dropped: {report.n_dropped})" if report.n_dropped else ""),
             f"database size: {report.database_bytes} bytes", ""]
    width = max((len(k) for k in report.recalls), default=8)
    lines.append(f"{'recall':<{width}}  [%]")
    for key, value in report.recalls.items():
        lines.append(f"{key:<{width}}  {value:6.2f}")
    for label, recs in report.per_sequence.items():
        lines.append("")
        lines.append(f"sequence {label}:")
        for key, value in recs.items():
            lines.append(f"  {key:<{width}}  {value:6.2f}")
    if report.timings:
        lines.append("")
        lines.append(f"{'stage':<16}  {'mean [s]':>10}  {'p95 [s]':>10}")
        for stage, stats in report.timings.items():
            lines.append(f"{stage:<16}  {stats['mean']:>10.6f}  "
                         f"{stats['p95']:>10.6f}")
    if report.failures:
        lines.append("")
        lines.append(f"failures: {len(report.failures)} "
                     f"(see failures.csv)")
    return "\n".join(lines) + "\n"


def write_failures_csv(report: EvalReport, path) -> None:
    """query_id, rank1, gt indices, and a pass flag per tolerance value."""
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        tol_cols = [f"passed_{_tolerance_key(report.tolerance, v)}"
                    for v in report.tolerance.values]
        writer.writerow(["query_id", "rank1", "gt_indices", *tol_cols])
        for f in report.failures:
            writer.writerow([f.query_id, f.rank1,
                             ";".join(str(g) for g in f.gt_indices),
                             *[int(f.passed[v]) for v in report.tolerance.values]])
