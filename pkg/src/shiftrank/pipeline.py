"""Two-stage recognition pipeline: filter by global descriptor, re-rank
the surviving candidates with a local-feature scorer.

The filtering stage is a single inner-product scan over the reference
descriptor matrix (unit-norm vectors, so largest inner product ==
smallest Euclidean distance). The re-ranking stage matches the query's
local features against each of the K candidates and scores the pairs
with the configured method. The two scores can optionally be combined
as ``final = c * s_f + s_r`` with a constant c large enough to keep the
filtering similarity (in [-1, 1]) comparable to re-ranking scores.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .matching import MatchSet, match_features, weigh_matches
from .scoring import (
    SCORER_NAMES,
    AggregateConfig,
    AnchorConfig,
    HistogramConfig,
    RansacConfig,
    aggregate_score,
    anchor_score,
    histogram_score,
    ransac_score,
)
from .store import Database, FeatureSet, GlobalDescriptor

DEFAULT_COMBINE_C = 1e6


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the two-stage pipeline needs besides the data itself.

    ``combine_c`` of None ranks purely by the re-ranking score (the
    filtering score only breaks ties); a positive value blends both.
    """

    k_candidates: int = 10
    scorer: str = "histogram"
    combine_c: float | None = None
    seed: int = 0
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    anchor: AnchorConfig = field(default_factory=AnchorConfig)
    aggregate: AggregateConfig = field(default_factory=AggregateConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)

    def __post_init__(self):
        if self.k_candidates < 1:
            raise ConfigError(
                f"k_candidates must be >= 1, got {self.k_candidates}")
        if self.scorer not in SCORER_NAMES:
            raise ConfigError(
                f"unknown scorer {self.scorer!r}; expected one of {SCORER_NAMES}")
        if self.combine_c is not None and not self.combine_c > 0:
            raise ConfigError(
                f"combine_c must be > 0 when set, got {self.combine_c}")


class RankedEntry(NamedTuple):
    reference_index: int
    filtering_score: float  # s_f: inner product with the query descriptor
    rerank_score: float  # s_r: local-feature similarity
    final_score: float


@dataclass(frozen=True)
class RankedResult:
    query_id: str
    entries: tuple[RankedEntry, ...]  # sorted by final_score descending
    timings: dict[str, float]  # seconds per stage; empty if not measured
    truncated: bool = False  # k exceeded the database size
    diagnostics: tuple[str, ...] = ()

    @property
    def best_index(self) -> int:
        if not self.entries:
            raise ContractError(f"no entries for query {self.query_id!r}")
        return self.entries[0].reference_index

    def top_indices(self, n: int) -> list[int]:
        return [e.reference_index for e in self.entries[:n]]


@dataclass(frozen=True)
class TopK:
    """Filtering-stage output: candidate indices with their s_f."""

    indices: np.ndarray  # (k,) int64, best first
    scores: np.ndarray  # (k,) float64 inner products
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return zip((int(i) for i in self.indices),
                   (float(s) for s in self.scores))


def filter_topk(query: GlobalDescriptor | np.ndarray, db: Database,
                k: int) -> TopK:
    """K most similar references by descriptor inner product.

    Descending by score, ties broken by lower reference index. Asking
    for more candidates than the database holds returns everything with
    ``truncated`` set.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    vec = query.vector if isinstance(query, GlobalDescriptor) else np.asarray(query)
    matrix = db.reference_descriptor_matrix
    if len(db) == 0:
        raise ContractError("cannot filter against an empty database")
    if vec.shape[0] != matrix.shape[1]:
        raise ContractError(
            f"query descriptor dim {vec.shape[0]} != database dim {matrix.shape[1]}")
    sims = (matrix @ vec.astype(np.float32)).astype(np.float64)
    order = np.argsort(-sims, kind="stable")  # stable: equal scores keep index order
    k_eff = min(k, len(sims))
    order = order[:k_eff]
    return TopK(order.astype(np.int64), sims[order], truncated=k > len(sims))


def score_candidate(q: FeatureSet, cand: FeatureSet, reference_index: int,
                    cfg: PipelineConfig) -> float:
    """Match one candidate against the query and score the pair.

    The match weights come from the active scorer's weight scheme; the
    RANSAC scorer ignores weights and draws its random samples from a
    per-candidate stream seeded by (cfg.seed, reference_index), so
    results do not depend on candidate evaluation order.
    """
    ms = match_features(q, cand)
    dims = (float(q.width), float(q.height))
    if cfg.scorer == "histogram":
        ms = weigh_matches(ms, cfg.histogram.weight_scheme, q, cand)
        return histogram_score(ms, dims, cfg.histogram).score
    if cfg.scorer == "anchor":
        ms = weigh_matches(ms, cfg.anchor.weight_scheme, q, cand)
        return anchor_score(ms, q, cand, cfg.anchor)
    if cfg.scorer == "aggregate":
        ms = weigh_matches(ms, cfg.aggregate.weight_scheme, q, cand)
        return aggregate_score(ms, dims[0], dims[1], cfg.aggregate)
    if cfg.scorer == "ransac":
        rng = np.random.default_rng((cfg.seed, reference_index))
        return ransac_score(ms, rng, cfg.ransac).score
    raise ConfigError(f"unknown scorer {cfg.scorer!r}")  # pragma: no cover


def combined_score(s_f: float, s_r: float, c: float | None) -> float:
    """final = c * s_f + s_r, or plain s_r when combination is off."""
    return s_r if c is None else c * s_f + s_r


def rerank(q_features: FeatureSet, candidates: TopK | Iterable[tuple[int, float]],
           db: Database, cfg: PipelineConfig,
           query_id: str | None = None) -> RankedResult:
    """Score every candidate and sort.

    Order: final score descending, then filtering score descending,
    then reference index ascending. A scorer failure on one candidate
    demotes that candidate to score 0 and is recorded in
    ``diagnostics`` instead of aborting the whole query.
    """
    pairs = list(candidates)
    diagnostics: list[str] = []
    scored: list[RankedEntry] = []
    for idx, s_f in pairs:
        if not 0 <= idx < len(db):
            raise ContractError(f"candidate index {idx} outside database")
        try:
            s_r = score_candidate(q_features, db.features(idx), idx, cfg)
        except Exception as exc:  # keep the query alive; surface the cause
            s_r = 0.0
            diagnostics.append(f"scorer {cfg.scorer} failed on reference "
                               f"{idx}: {exc}")
        scored.append(RankedEntry(idx, float(s_f), float(s_r),
                                  combined_score(float(s_f), float(s_r),
                                                 cfg.combine_c)))
    scored.sort(key=lambda e: (-e.final_score, -e.filtering_score,
                               e.reference_index))
    truncated = candidates.truncated if isinstance(candidates, TopK) else False
    return RankedResult(query_id or q_features.image_id, tuple(scored), {},
                        truncated=truncated, diagnostics=tuple(diagnostics))


def recognize(query_id: str, db: Database, cfg: PipelineConfig) -> RankedResult:
    """Full two-stage run for one query, with per-stage wall-clock times.

    Timing keys: ``filtering`` (descriptor scan), ``feature_load``
    (query feature file read), ``matching_score`` (match + score over
    all candidates), ``total``.
    """
    t0 = time.perf_counter()
    topk = filter_topk(db.descriptor(query_id), db, cfg.k_candidates)
    t1 = time.perf_counter()
    q_features = db.query_features(query_id)
    t2 = time.perf_counter()
    result = rerank(q_features, topk, db, cfg, query_id=query_id)
    t3 = time.perf_counter()
    timings = {
        "filtering": t1 - t0,
        "feature_load": t2 - t1,
        "matching_score": t3 - t2,
        "total": t3 - t0,
    }
    return replace(result, timings=timings)


def ranked_result_to_dict(result: RankedResult,
                          include_timings: bool = True) -> dict:
    doc = {
        "query_id": result.query_id,
        "entries": [
            {"index": e.reference_index, "s_f": e.filtering_score,
             "s_r": e.rerank_score, "final": e.final_score}
            for e in result.entries
        ],
    }
    if include_timings:
        doc["timings"] = dict(result.timings)
    if result.truncated:
        doc["truncated"] = True
    if result.diagnostics:
        doc["diagnostics"] = list(result.diagnostics)
    return doc


def write_results_jsonl(results: Sequence[RankedResult], path,
                        include_timings: bool = True) -> None:
    """One JSON object per line, in the given order."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(ranked_result_to_dict(result, include_timings),
                                sort_keys=True) + "\n")
