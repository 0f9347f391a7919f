"""Command-line driver: train, retrain, apply, evaluate, cluster, synth.

Exit codes: 0 success, 1 usage error, 2 data error. Data errors print one
line ``ERROR:<module>:<kind>: message`` to stderr. Logs go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import UatagError
from .esc import EscOptions
from .evalreport import evaluate
from .features import FEATURE_NAMES
from .forest import ForestParams
from .fusion import FusionConfig, prepare_features
from .ingest import load_corpus, load_labels, merge_corpora
from .modelstore import Reservoir, TrainParams, execute, load, rows_from_corpus, save, train_scratch, train_supplemental
from .namecluster import (
    DEFAULT_FLAG_THRESHOLD,
    DEFAULT_K,
    DEFAULT_THRESHOLD,
    cluster_names,
    clustered_order,
    clusters_csv,
    kmerize,
    matrix_csv,
    outlier_scores,
    outliers_csv,
    similarity_matrix,
)
from .synthgen import generate_fleet, write_fleet
from .vocab import load_vocabulary

log = logging.getLogger("uatag")

USAGE_EXIT = 1
DATA_EXIT = 2


class CliError(UatagError):
    module = "cli"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {s}")
    return v


def _unit_float(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {s}")
    return v


def _k(s: str) -> int:
    v = int(s)
    if not 2 <= v <= 8:
        raise argparse.ArgumentTypeError(f"k must be in 2..8, got {s}")
    return v


def _common(p: argparse.ArgumentParser, vocab: bool = True) -> None:
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads for tree growth and SVMs (default 1)")
    p.add_argument("-v", "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="stderr log level (default WARNING)")
    if vocab:
        p.add_argument("--vocab", type=Path, help="tags.csv vocabulary file (default: packaged tags.csv)")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=42, help="master seed for the random forest (default 42)")
    p.add_argument("--scaling", choices=["standardization", "normalization", "minmax"], default="standardization",
                   help="feature scaling method (default standardization)")
    p.add_argument("--trees", type=_positive_int, default=100, help="number of trees (default 100)")
    p.add_argument("--max-depth", type=_positive_int, default=12, help="tree depth limit (default 12)")
    p.add_argument("--kernel", choices=["squared_exponential", "linear"], default="squared_exponential",
                   help="SVM kernel (default squared_exponential)")
    p.add_argument("--gamma", type=float, default=None, help="squared-exponential bandwidth (default 1/d)")
    p.add_argument("--C", type=float, default=1.0, dest="C", help="SVM soft-margin penalty (default 1.0)")
    _tau_flags(p, FusionConfig.tau_low, FusionConfig.tau_high)


def _tau_flags(p: argparse.ArgumentParser, low, high) -> None:
    p.add_argument("--tau-low", type=_unit_float, default=low,
                   help=f"ESC threshold when the forest votes yes (default {low if low is not None else 'from model'})")
    p.add_argument("--tau-high", type=_unit_float, default=high,
                   help=f"ESC threshold when the forest votes no (default {high if high is not None else 'from model'})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uatag", description="Automatic Haystack marker tagging of BAS points.")
    parser.add_argument("--version", action="version", version=f"uatag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from scratch on labeled corpora")
    p.add_argument("--corpus", type=Path, action="append", required=True,
                   help="corpus directory with points.csv, timeseries.csv, labels.csv (repeatable)")
    p.add_argument("--model", type=Path, required=True, help="output model.json")
    _model_flags(p)
    _common(p)

    p = sub.add_parser("retrain", help="supplemental training of an existing model on new labeled corpora")
    p.add_argument("--model", type=Path, required=True, help="existing model.json")
    p.add_argument("--corpus", type=Path, action="append", required=True, help="new labeled corpus directory (repeatable)")
    p.add_argument("--out", type=Path, help="updated model path (default: overwrite --model)")
    p.add_argument("--new-trees", type=_positive_int, default=20, help="trees grown on the new rows (default 20)")
    p.add_argument("--tree-cap", type=_positive_int, default=150, help="maximum trees kept (default 150)")
    p.add_argument("--warm-iter", type=_positive_int, default=2000, help="SMO iteration budget per warm-started SVM (default 2000)")
    _common(p, vocab=False)

    p = sub.add_parser("apply", help="tag an unlabeled corpus with a trained model")
    p.add_argument("--model", type=Path, required=True, help="trained model.json")
    p.add_argument("--corpus", type=Path, action="append", required=True, help="corpus directory (repeatable)")
    p.add_argument("--out", type=Path, required=True, help="output directory for tagged.csv and filtered.csv")
    p.add_argument("--verbose", action="store_true", help="also write suppressed (point, tag) rows to tagged.csv")
    p.add_argument("--audit", action="store_true", help="cluster point names per building and write outliers.csv")
    p.add_argument("--k", type=_k, default=DEFAULT_K, help=f"k-mer length for --audit (default {DEFAULT_K})")
    p.add_argument("--threshold", type=_unit_float, default=DEFAULT_THRESHOLD,
                   help=f"name clustering threshold for --audit (default {DEFAULT_THRESHOLD})")
    p.add_argument("--flag-threshold", type=_unit_float, default=DEFAULT_FLAG_THRESHOLD,
                   help=f"outlier score at which a point is flagged (default {DEFAULT_FLAG_THRESHOLD})")
    p.add_argument("--dump-features", type=Path, help="write the raw feature matrix (CSV, header = feature names)")
    _tau_flags(p, None, None)
    _common(p)

    p = sub.add_parser("evaluate", help="score tagged.csv against ground-truth labels")
    p.add_argument("--predicted", type=Path, required=True, help="tagged.csv from apply")
    p.add_argument("--truth", type=Path, required=True, help="labels.csv with point_id,tag rows")
    p.add_argument("--filtered", type=Path, help="filtered.csv from apply; those points are left out of scoring")
    p.add_argument("--out", type=Path, help="report path (default report.json, or report.csv with --csv)")
    p.add_argument("--csv", action="store_true", help="write a flat per-tag CSV table instead of JSON")
    _common(p)

    p = sub.add_parser("cluster", help="cluster raw point names by k-mer similarity")
    p.add_argument("--corpus", type=Path, action="append", required=True, help="corpus directory (repeatable)")
    p.add_argument("--out", type=Path, required=True, help="output directory for clusters.csv")
    p.add_argument("--k", type=_k, default=DEFAULT_K, help=f"k-mer length (default {DEFAULT_K})")
    p.add_argument("--threshold", type=_unit_float, default=DEFAULT_THRESHOLD,
                   help=f"stop merging below this average similarity (default {DEFAULT_THRESHOLD})")
    p.add_argument("--tags", type=Path, help="tagged.csv or labels.csv; adds outliers.csv scored on these tags")
    p.add_argument("--flag-threshold", type=_unit_float, default=DEFAULT_FLAG_THRESHOLD,
                   help=f"outlier score at which a point is flagged (default {DEFAULT_FLAG_THRESHOLD})")
    p.add_argument("--dump-matrix", action="store_true",
                   help="also write matrix_<building>.csv, similarities in clustered order")
    _common(p, vocab=False)

    p = sub.add_parser("synth", help="generate a labeled synthetic fleet")
    p.add_argument("--buildings", type=int, default=3, help="number of buildings, at least 2 (default 3)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", type=Path, required=True, help="output directory, one subdirectory per building")
    p.add_argument("--points-per-building", type=_positive_int, default=50, help="points per building (default 50)")
    p.add_argument("--days", type=int, default=28, help="days of history, at least 21 (default 28)")
    p.add_argument("--sparse-fraction", type=_unit_float, default=0.0,
                   help="fraction of points sampled too sparsely to pass the density filter (default 0)")
    _common(p, vocab=False)
    return parser


# -- subcommands ---------------------------------------------------------------


def _corpus(dirs, labels: bool = True):
    return merge_corpora([load_corpus(d, labels) for d in dirs])


def _vocab(args):
    return load_vocabulary(getattr(args, "vocab", None))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_train(args) -> int:
    vocab = _vocab(args)
    corpus = _corpus(args.corpus)
    params = TrainParams(
        scaling=args.scaling,
        forest=ForestParams(n_trees=args.trees, max_depth=args.max_depth, seed=args.seed, threads=args.threads),
        esc=EscOptions(kernel=args.kernel, gamma=args.gamma, C=args.C, threads=args.threads),
        fusion=FusionConfig(args.tau_low, args.tau_high),
    )
    rows = rows_from_corpus(corpus, vocab)
    if not rows:
        raise CliError("no_rows", "no labeled point passed the density filter")
    log.info("training on %d rows", len(rows))
    save(train_scratch(Reservoir(tuple(rows)), vocab, params), args.model)
    return 0


def cmd_retrain(args) -> int:
    bundle = load(args.model)
    corpus = _corpus(args.corpus)
    rows = rows_from_corpus(corpus, bundle.vocabulary)
    p = bundle.params
    params = replace(
        p,
        forest=replace(p.forest, threads=args.threads),
        esc=replace(p.esc, threads=args.threads),
        supplemental_trees=args.new_trees,
        tree_cap=args.tree_cap,
        warm_iter=args.warm_iter,
    )
    save(train_supplemental(bundle, rows, params), args.out or args.model)
    return 0


def _audit(corpus, applied: dict[str, set], k: int, threshold: float, flag: float):
    records = []
    by_building: dict[str, list] = {}
    for p in corpus.points:
        if p.point_id in applied:
            by_building.setdefault(p.building_id, []).append(p)
    offset = 0
    for bid in sorted(by_building):
        seqs = [kmerize(p.raw_name, k, p.point_id) for p in sorted(by_building[bid], key=lambda p: p.point_id)]
        clusters = [replace(c, id=c.id + offset) for c in cluster_names(seqs, threshold)]
        offset += len(clusters)
        records.extend(outlier_scores(clusters, applied, flag))
    return records


def cmd_apply(args) -> int:
    bundle = load(args.model)
    vocab = load_vocabulary(args.vocab) if args.vocab else bundle.vocabulary
    cfg = FusionConfig(
        bundle.fusion.tau_low if args.tau_low is None else args.tau_low,
        bundle.fusion.tau_high if args.tau_high is None else args.tau_high,
    )
    corpus = _corpus(args.corpus, labels=False)
    report = execute(bundle, corpus, vocab, cfg)
    _write(args.out / "tagged.csv", report.to_csv(verbose=args.verbose))
    _write(args.out / "filtered.csv", report.filtered_csv())
    if args.dump_features:
        retained, X, _, _ = prepare_features(corpus.points, corpus.series)
        rows = [",".join(["point_id", *FEATURE_NAMES])]
        rows += [",".join([pid, *(repr(float(v)) for v in x)]) for pid, x in zip(retained, X)]
        _write(args.dump_features, "\n".join(rows) + "\n")
    if args.audit:
        records = _audit(corpus, report.applied(), args.k, args.threshold, args.flag_threshold)
        _write(args.out / "outliers.csv", outliers_csv(records))
        n = sum(r.flagged for r in records)
        log.info("%d of %d points flagged for review", n, len(records))
    return 0


def read_tagged(path: Path) -> dict[str, set[str]]:
    """Applied tags from tagged.csv, or every row of a plain labels.csv."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"point_id", "tag"} <= set(reader.fieldnames):
            raise CliError("bad_header", f"{path}: expected point_id and tag columns")
        out: dict[str, set[str]] = {}
        for row in reader:
            if row.get("stage", "applied") == "applied":
                out.setdefault(row["point_id"], set()).add(row["tag"])
            else:
                out.setdefault(row["point_id"], set())
    return out


def cmd_evaluate(args) -> int:
    vocab = _vocab(args)
    predicted = read_tagged(args.predicted)
    truth = load_labels(args.truth)
    if args.filtered:
        with open(args.filtered, newline="", encoding="utf-8") as fh:
            skipped = {row["point_id"] for row in csv.DictReader(fh)}
        truth = {pid: t for pid, t in truth.items() if pid not in skipped}
    report = evaluate(predicted, truth, vocab)
    if args.csv:
        _write(args.out or Path("report.csv"), report.to_csv())
    else:
        _write(args.out or Path("report.json"), report.to_json())
    print(f"micro_f1={report.micro_f1:.4f} tp={report.tp} fp={report.fp} fn={report.fn}")
    return 0


def cmd_cluster(args) -> int:
    corpus = _corpus(args.corpus, labels=False)
    tags = read_tagged(args.tags) if args.tags else None
    by_building: dict[str, list] = {}
    for p in corpus.points:
        by_building.setdefault(p.building_id, []).append(p)
    names = {p.point_id: p.raw_name for p in corpus.points}
    all_clusters, records, offset = [], [], 0
    for bid in sorted(by_building):
        pts = sorted(by_building[bid], key=lambda p: p.point_id)
        seqs = [kmerize(p.raw_name, args.k, p.point_id) for p in pts]
        clusters = [replace(c, id=c.id + offset) for c in cluster_names(seqs, args.threshold)]
        offset += len(clusters)
        all_clusters.extend(clusters)
        if args.dump_matrix:
            order = clustered_order(clusters)
            pos = {p.point_id: i for i, p in enumerate(pts)}
            S = similarity_matrix(seqs)
            idx = [pos[pid] for pid in order]
            _write(args.out / f"matrix_{bid}.csv", matrix_csv(S[np.ix_(idx, idx)], order))
        if tags is not None:
            records.extend(outlier_scores(clusters, {pid: tags.get(pid, set()) for pid in names}, args.flag_threshold))
    _write(args.out / "clusters.csv", clusters_csv(all_clusters, names))
    if tags is not None:
        _write(args.out / "outliers.csv", outliers_csv(records))
    return 0


def cmd_synth(args) -> int:
    fleet = generate_fleet(
        args.buildings,
        seed=args.seed,
        n_points=args.points_per_building,
        days=args.days,
        sparse_fraction=args.sparse_fraction,
    )
    for path in write_fleet(fleet, args.out):
        log.info("wrote %s", path)
    return 0


COMMANDS = {
    "train": cmd_train,
    "retrain": cmd_retrain,
    "apply": cmd_apply,
    "evaluate": cmd_evaluate,
    "cluster": cmd_cluster,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_EXIT
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UatagError as exc:
        print(f"{exc.prefix()} {exc}", file=sys.stderr)
        return DATA_EXIT
    except OSError as exc:
        print(f"ERROR:cli:io: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
