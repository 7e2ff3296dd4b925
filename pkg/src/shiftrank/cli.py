"""Command-line front end.

Subcommands: ``synth`` (generate a synthetic dataset), ``ingest``
(validate loose feature/descriptor files), ``build-db`` (validate and
summarize a dataset), ``recognize`` (rank candidates for queries),
``eval`` (metrics run writing report files), ``bench`` (timed run
writing a per-stage timing table).

Exit codes: 0 success, 1 validation/config error, 2 I/O error,
3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    InternalError,
    LoadError,
)
from .evaluation import (
    DEFAULT_N_VALUES,
    ToleranceSpec,
    evaluate_results,
    report_to_json,
    report_to_text,
    summarize_timings,
    write_failures_csv,
)
from .matching import WeightScheme
from .pipeline import (
    DEFAULT_COMBINE_C,
    PipelineConfig,
    recognize,
    write_results_jsonl,
)
from .scoring import (
    SCORER_NAMES,
    AggregateConfig,
    AnchorConfig,
    HistogramConfig,
    RansacConfig,
)
from .store import load_database, load_descriptor_file, load_feature_file, load_manifest
from .synthetic import SynthSpec, generate, materialize


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; our contract reserves 2 for I/O errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--scorer", choices=SCORER_NAMES, default="histogram")
    g.add_argument("--k-candidates", type=int, default=10, metavar="K")
    g.add_argument("--combine-c", type=float, nargs="?", const=DEFAULT_COMBINE_C,
                   default=None, metavar="C",
                   help="blend filtering and re-ranking scores as "
                        "C*s_f + s_r (bare flag uses C=1e6; omit to rank "
                        "by s_r alone)")
    g.add_argument("--weight-scheme", choices=[s.value for s in WeightScheme],
                   default=None,
                   help="override the scorer's default match weighting")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel query workers (results are identical "
                        "for any value)")

    h = p.add_argument_group("histogram scorer")
    h.add_argument("--bin-size", type=float, default=15.0)
    h.add_argument("--sigma", type=float, default=22.5)
    h.add_argument("--truncation-radius", type=float, default=3.0,
                   help="drop votes beyond this many sigmas from a bin center")
    h.add_argument("--exact-votes", action="store_true",
                   help="disable vote truncation (slower, exact)")

    a = p.add_argument_group("anchor scorer")
    a.add_argument("--grid-bins", type=int, default=15)
    a.add_argument("--window", type=int, default=10)
    a.add_argument("--anchor-tolerance", type=float, default=3.0)

    r = p.add_argument_group("ransac scorer")
    r.add_argument("--ransac-iterations", type=int, default=2000)
    r.add_argument("--ransac-threshold", type=float, default=24.0)
    r.add_argument("--ransac-confidence", type=float, default=0.99)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--features", required=True, metavar="DIR")
    p.add_argument("--descriptors", required=True, metavar="DIR")


def _scheme(args, default: WeightScheme) -> WeightScheme:
    if args.weight_scheme is None:
        return default
    return WeightScheme.parse(args.weight_scheme)


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        k_candidates=args.k_candidates,
        scorer=args.scorer,
        combine_c=args.combine_c,
        seed=args.seed,
        histogram=HistogramConfig(
            bin_size=args.bin_size,
            sigma=args.sigma,
            truncation_radius=None if args.exact_votes else args.truncation_radius,
            weight_scheme=_scheme(args, WeightScheme.FS)),
        anchor=AnchorConfig(
            grid_bins=args.grid_bins,
            window=args.window,
            tolerance=args.anchor_tolerance,
            weight_scheme=_scheme(args, WeightScheme.FS)),
        aggregate=AggregateConfig(weight_scheme=_scheme(args, WeightScheme.DMF)),
        ransac=RansacConfig(
            max_iterations=args.ransac_iterations,
            inlier_threshold=args.ransac_threshold,
            confidence=args.ransac_confidence),
    )


def _tolerance(args, manifest) -> ToleranceSpec | None:
    values = getattr(args, "tolerances", None)
    if values is None:
        return None
    mode = "index" if manifest.tolerance_unit == "sequence_index" else "meters"
    return ToleranceSpec(mode, tuple(float(v) for v in values))


def _run_queries(db, cfg: PipelineConfig, query_ids, jobs: int):
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(query_ids) <= 1:
        return [recognize(qid, db, cfg) for qid in query_ids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda qid: recognize(qid, db, cfg), query_ids))


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_places=args.places,
        features_per_image=args.features_per_image,
        descriptor_dim=args.dim,
        width=args.width,
        height=args.height,
        inlier_shift=(args.shift[0], args.shift[1]),
        outlier_fraction=args.outlier_fraction,
        descriptor_noise_sigma=args.noise_sigma,
        global_noise_sigma=args.global_noise_sigma,
        descriptor_pool=args.descriptor_pool,
        rng_seed=args.seed,
    )
    paths = materialize(generate(spec), args.out)
    print(f"wrote manifest {paths.manifest}")
    print(f"features in {paths.feature_dir}, descriptors in {paths.descriptor_dir}")
    return 0


def cmd_ingest(args) -> int:
    for raw in args.files:
        path = Path(raw)
        if path.suffix == ".vprf":
            fs = load_feature_file(path)
            print(f"{path}: image {fs.image_id!r}, {len(fs)} features, "
                  f"dim {fs.descriptor_dim}, {fs.width}x{fs.height}")
        elif path.suffix == ".vprg":
            descs = load_descriptor_file(path)
            dim = descs[0].vector.shape[0] if descs else 0
            print(f"{path}: {len(descs)} global descriptors, dim {dim}")
        else:
            raise ConfigError(f"unrecognized extension {path.suffix!r} "
                              f"(expected .vprf or .vprg): {path}")
    return 0


def cmd_build_db(args) -> int:
    manifest = load_manifest(args.manifest)
    db = load_database(manifest, args.features, args.descriptors)
    dim = db.reference_descriptor_matrix.shape[1]
    n_features = sum(len(db.features(i)) for i in range(len(db)))
    print(f"database: {len(db)} reference images, {n_features} local "
          f"features, global dim {dim}")
    print(f"size on disk: {db.total_bytes} bytes "
          f"({db.total_bytes / max(len(db), 1):.0f} per reference)")
    return 0


def cmd_recognize(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _pipeline_config(args)
    db = load_database(manifest, args.features, args.descriptors)
    query_ids = args.query or manifest.query_ids
    results = _run_queries(db, cfg, query_ids, args.jobs)
    for result in results:
        best = result.entries[0]
        ref_id = manifest.reference_ids[best.reference_index]
        print(f"{result.query_id}: {ref_id} (index {best.reference_index}) "
              f"final={best.final_score:.6g} s_f={best.filtering_score:.6g} "
              f"s_r={best.rerank_score:.6g}")
        for note in result.diagnostics:
            print(f"  warning: {note}", file=sys.stderr)
    if args.out:
        write_results_jsonl(results, args.out)
        print(f"wrote {args.out}")
    return 0


def _evaluated_run(args):
    manifest = load_manifest(args.manifest)
    cfg = _pipeline_config(args)
    tol = _tolerance(args, manifest)  # validate before any heavy work
    db = load_database(manifest, args.features, args.descriptors)
    results = _run_queries(db, cfg, manifest.query_ids, args.jobs)
    report = evaluate_results(results, manifest, cfg.scorer, tol,
                              n_values=tuple(args.n_values),
                              database_bytes=db.total_bytes)
    return results, report


def cmd_eval(args) -> int:
    results, report = _evaluated_run(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (outdir / "report.txt").write_text(report_to_text(report), encoding="utf-8")
    write_failures_csv(report, outdir / "failures.csv")
    write_results_jsonl(sorted(results, key=lambda r: r.query_id),
                        outdir / "results.jsonl", include_timings=False)
    print(report_to_text(report), end="")
    print(f"wrote {outdir / 'report.json'}")
    return 0


def cmd_bench(args) -> int:
    results, report = _evaluated_run(args)
    report = dataclasses.replace(report, timings=summarize_timings(results))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {
        "scorer": report.scorer,
        "k_candidates": args.k_candidates,
        "jobs": args.jobs,
        "queries": report.n_queries,
        "database_bytes": report.database_bytes,
        "timings": report.timings,
        "recalls": report.recalls,
    }
    (outdir / "bench.json").write_text(json.dumps(doc, indent=1, sort_keys=True)
                                       + "\n", encoding="utf-8")
    print(report_to_text(report), end="")
    print(f"wrote {outdir / 'bench.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shiftrank",
                     description="two-stage place recognition: global-"
                                 "descriptor filtering plus local-feature "
                                 "re-ranking")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--places", type=int, default=20)
    p.add_argument("--features-per-image", type=int, default=50)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--width", type=int, default=336)
    p.add_argument("--height", type=int, default=336)
    p.add_argument("--shift", type=float, nargs=2, default=(0.0, 0.0),
                   metavar=("DX", "DY"))
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--global-noise-sigma", type=float, default=0.0)
    p.add_argument("--descriptor-pool", type=int, default=None, metavar="V",
                   help="draw descriptors from a shared vocabulary of V "
                        "prototypes (makes re-ranking genuinely hard)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate feature/descriptor files")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-db", help="validate a dataset and print its size")
    _add_data_flags(p)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("recognize", help="rank references for queries")
    _add_data_flags(p)
    _add_pipeline_flags(p)
    p.add_argument("--query", action="append", metavar="ID",
                   help="query id (repeatable; default: all in manifest)")
    p.add_argument("--out", metavar="FILE",
                   help="write per-query results as JSON lines")
    p.set_defaults(func=cmd_recognize)

    for name, func, help_text in (
            ("eval", cmd_eval, "run all queries and write metric reports"),
            ("bench", cmd_bench, "timed run with a per-stage timing table")):
        p = sub.add_parser(name, help=help_text)
        _add_data_flags(p)
        _add_pipeline_flags(p)
        p.add_argument("--out", default=".", metavar="DIR",
                       help="directory for report files")
        p.add_argument("--tolerances", type=float, nargs="+", default=None,
                       help="override tolerance values (unit from manifest)")
        p.add_argument("--n-values", type=int, nargs="+",
                       default=list(DEFAULT_N_VALUES),
                       help="N values for metric Recall@N")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LoadError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # last resort: never die with a traceback
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
