"""Two-stage visual place recognition with model-free re-ranking.

Stage one filters a reference database down to K candidates by global-
descriptor similarity; stage two re-ranks those candidates by matching
local features and scoring the spatial consistency of the match shifts.
Three model-free scorers (shift histogram, anchor grid, aggregated
shift agreement) trade accuracy against cost; a RANSAC homography
scorer serves as the model-based reference.
"""

from .errors import (
    ConfigError,
    ContractError,
    DescriptorDriftWarning,
    FormatError,
    InternalError,
    LoadError,
    ShiftrankError,
    ShiftSpreadWarning,
)
from .evaluation import (
    EvalReport,
    MetricGroundTruth,
    ToleranceSpec,
    build_ground_truth_metric,
    evaluate_results,
    recall_at_1,
    recall_at_n,
    report_to_json,
    report_to_text,
    summarize_timings,
    write_failures_csv,
)
from .matching import (
    Match,
    MatchSet,
    WeightScheme,
    match_features,
    weigh_matches,
)
from .pipeline import (
    PipelineConfig,
    RankedEntry,
    RankedResult,
    TopK,
    combined_score,
    filter_topk,
    ranked_result_to_dict,
    recognize,
    rerank,
    score_candidate,
    write_results_jsonl,
)
from .scoring import (
    SCORER_NAMES,
    AggregateConfig,
    AnchorConfig,
    BinMatchMatrix,
    HistogramConfig,
    HistogramResult,
    RansacConfig,
    RansacResult,
    ShiftHistogram,
    aggregate_score,
    anchor_score,
    build_bin_matrix,
    build_histogram,
    fit_homography,
    histogram_score,
    ransac_score,
)
from .store import (
    Database,
    DatasetManifest,
    Feature,
    FeatureSet,
    GlobalDescriptor,
    load_database,
    load_descriptor_file,
    load_feature_file,
    load_manifest,
    write_descriptor_file,
    write_feature_file,
    write_manifest,
)
from .synthetic import (
    DatasetPaths,
    SynthDataset,
    SynthPlace,
    SynthSpec,
    generate,
    generate_place,
    materialize,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateConfig",
    "AnchorConfig",
    "BinMatchMatrix",
    "ConfigError",
    "ContractError",
    "Database",
    "DatasetManifest",
    "DescriptorDriftWarning",
    "EvalReport",
    "Feature",
    "FeatureSet",
    "FormatError",
    "GlobalDescriptor",
    "HistogramConfig",
    "HistogramResult",
    "InternalError",
    "LoadError",
    "Match",
    "MatchSet",
    "MetricGroundTruth",
    "PipelineConfig",
    "RankedEntry",
    "RankedResult",
    "RansacConfig",
    "RansacResult",
    "SCORER_NAMES",
    "ShiftHistogram",
    "ShiftSpreadWarning",
    "ShiftrankError",
    "SynthDataset",
    "SynthSpec",
    "ToleranceSpec",
    "TopK",
    "WeightScheme",
    "aggregate_score",
    "anchor_score",
    "build_bin_matrix",
    "build_ground_truth_metric",
    "build_histogram",
    "combined_score",
    "evaluate_results",
    "filter_topk",
    "fit_homography",
    "DatasetPaths",
    "SynthPlace",
    "generate",
    "generate_place",
    "histogram_score",
    "load_database",
    "load_descriptor_file",
    "load_feature_file",
    "load_manifest",
    "match_features",
    "materialize",
    "ranked_result_to_dict",
    "ransac_score",
    "recall_at_1",
    "recall_at_n",
    "recognize",
    "report_to_json",
    "report_to_text",
    "rerank",
    "score_candidate",
    "summarize_timings",
    "weigh_matches",
    "write_descriptor_file",
    "write_failures_csv",
    "write_feature_file",
    "write_manifest",
    "write_results_jsonl",
]
