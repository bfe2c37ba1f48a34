"""Command-line pipeline.

Every stage is a separate subcommand that reads files and writes one output
file, so stages can be rerun in isolation::

    zsaction fit-gmm   --embeddings E --object-labels O -o model.json
    zsaction translate --embeddings E --object-labels O --action-labels A --model model.json -o affinity.json
    zsaction classify  --affinity affinity.json --scores scores.tsv -o predictions.tsv
    zsaction eval      --metric accuracy --predictions predictions.tsv --ground-truth gt.tsv -o report.tsv

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""
import argparse
import logging
import sys
from collections import OrderedDict

import numpy as np

from zsaction import io
from zsaction.config import RunConfig, load_config
from zsaction.embeddings import load_embeddings, read_labels, tokenize_label
from zsaction.encoding import EncoderConfig, PcaTransform, encode_all, fit_pca, object_word_matrix
from zsaction.engine import ScorePipeline, classify, retrieve, top_detections
from zsaction.errors import InputError, NumericalError
from zsaction.evaluation import MetricReport, auc_vs_threshold, average_class_accuracy, mean_average_precision
from zsaction.gmm import GmmModel, fit_gmm
from zsaction.translation import AffinityMatrix, build_affinity, sparsify_action

logger = logging.getLogger("zsaction")


def _require(config, *names):
    missing = [n for n in names if getattr(config, n) is None]
    if missing:
        raise InputError("missing required input(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _fmt_for(output, fmt):
    if fmt:
        return fmt
    return "json" if str(output).endswith(".json") else "tsv"


def _load_labels(path, table):
    return [tokenize_label(raw, table) for raw in read_labels(path)]


def _load_model(path):
    doc = io.read_json(path)
    try:
        return PcaTransform.from_dict(doc["pca"]), GmmModel.from_dict(doc["gmm"]), doc
    except KeyError as e:
        raise InputError(f"{path}: model file lacks {e}") from None


def _encoder(config: RunConfig):
    if config.encoder == "fwv":
        _require(config, "model")
        pca, gmm, _ = _load_model(config.model)
        return EncoderConfig("fwv", config.normalize_labels, config.fwv_blocks, config.alpha, pca, gmm)
    return EncoderConfig("awv", config.normalize_labels)


def _pipeline(config: RunConfig):
    return ScorePipeline(config.t_v, config.alpha, config.normalize_videos, config.pipeline_order)


def _load_affinity(path):
    doc = io.read_json(path)
    try:
        return AffinityMatrix.from_dict(doc)
    except KeyError as e:
        raise InputError(f"{path}: affinity file lacks {e}") from None


def _check_objects(where, objects, g):
    if list(objects) != g.objects:
        raise InputError(f"{where}: object columns do not match the affinity matrix objects "
                         f"({len(objects)} vs {g.m}, or different order)")


# commands; each returns the text of its output file

def cmd_fit_gmm(config: RunConfig) -> str:
    _require(config, "embeddings", "object_labels")
    table = load_embeddings(config.embeddings)
    labels = _load_labels(config.object_labels, table)
    dropped = [l.raw for l in labels if not l.encodable]
    if dropped:
        logger.warning("%d object label(s) have no in-vocabulary token and are ignored", len(dropped))
    X = object_word_matrix(labels, table)
    distinct = np.unique(X, axis=0).shape[0]
    if config.k > distinct:
        raise InputError(f"k={config.k} exceeds the number of distinct object word vectors ({distinct})")
    out_dim = max(1, table.dim // config.pca_factor)
    pca = fit_pca(X, out_dim)
    gmm = fit_gmm(pca.transform(X), config.k, seed=config.seed)
    return io.dump_json({
        "config_hash": config.config_hash(),
        "embedding_dim": table.dim,
        "n_words": int(X.shape[0]),
        "iterations": len(gmm.history) - 1,
        "pca": pca.to_dict(),
        "gmm": gmm.to_dict(),
    })


def cmd_encode(config: RunConfig) -> str:
    _require(config, "embeddings")
    path = config.labels or config.object_labels or config.action_labels
    if path is None:
        raise InputError("missing required input: --labels")
    table = load_embeddings(config.embeddings)
    enc = _encoder(config)
    labels = _load_labels(path, table)
    matrix = encode_all(labels, table, enc)
    meta = {"encoder": config.encoder, "rows": len(labels), "dim": matrix.shape[1],
            "config_hash": config.config_hash()}
    return io.format_encodings([l.raw for l in labels], matrix, meta)


def cmd_translate(config: RunConfig) -> str:
    _require(config, "embeddings", "object_labels", "action_labels")
    table = load_embeddings(config.embeddings)
    enc = _encoder(config)
    objects = _load_labels(config.object_labels, table)
    actions = _load_labels(config.action_labels, table)
    if not objects or not actions:
        raise InputError("object and action label lists must be non-empty")
    bad = [l.raw for l in objects + actions if not l.encodable]
    if bad:
        raise InputError(f"{len(bad)} unencodable label(s): " + ", ".join(repr(b) for b in bad))
    g = build_affinity(encode_all(objects, table, enc), encode_all(actions, table, enc),
                       [l.raw for l in objects], [l.raw for l in actions])
    if config.t_z is not None:
        g = sparsify_action(g, config.t_z)
    doc = {"config_hash": config.config_hash(), "encoder": config.encoder}
    doc.update(g.to_dict())
    return io.dump_json(doc)


def _report_id_mismatch(config, ids):
    if config.ground_truth is None:
        return
    truth = io.read_ground_truth(config.ground_truth)
    extra = sum(1 for v in ids if v not in truth)
    missing = sum(1 for v in truth if v not in set(ids))
    if extra or missing:
        logger.warning("id mismatch with ground truth: %d scored video(s) without ground truth, "
                       "%d ground-truth video(s) without scores", extra, missing)


def cmd_classify(config: RunConfig, fmt="tsv") -> str:
    _require(config, "affinity", "scores")
    g = _load_affinity(config.affinity)
    objects, videos = io.read_scores(config.scores)
    _check_objects(config.scores, objects, g)
    if not videos:
        logger.warning("no videos in %s; writing an empty prediction file", config.scores)
    _report_id_mismatch(config, [v.id for v in videos])
    pipe = _pipeline(config)
    preds = [classify(v, g, pipe) for v in videos]
    meta = {"config_hash": config.config_hash()}
    if fmt == "json":
        return io.dump_json(io.predictions_document(preds, meta))
    return io.format_predictions(preds, meta)


def cmd_retrieve(config: RunConfig, actions=None) -> str:
    _require(config, "affinity", "scores")
    g = _load_affinity(config.affinity)
    objects, videos = io.read_scores(config.scores)
    _check_objects(config.scores, objects, g)
    actions = actions or g.actions
    rankings = OrderedDict()
    if videos:
        pipe = _pipeline(config)
        prepared = [pipe(v) for v in videos]
        for a in actions:
            rankings[a] = retrieve(prepared, a, g)
    else:
        logger.warning("no videos in %s; writing an empty ranking file", config.scores)
    return io.format_rankings(rankings, {"config_hash": config.config_hash()})


def cmd_localize(config: RunConfig, fmt="tsv") -> str:
    _require(config, "affinity", "tubes")
    g = _load_affinity(config.affinity)
    objects, tubes = io.read_tubes(config.tubes)
    _check_objects(config.tubes, objects, g)
    pipe = _pipeline(config)
    dets = OrderedDict()
    for vid, ts in tubes.items():
        if not ts:
            logger.warning("video %r has no tube proposals", vid)
            continue
        dets[vid] = top_detections(ts, g, config.detection_limit, config.nms, pipe)
    meta = {"config_hash": config.config_hash()}
    if fmt == "json":
        return io.dump_json(io.predictions_document([d for ds in dets.values() for d in ds], meta))
    return io.format_detections(dets, meta)


def _auc_report(config):
    _require(config, "detections", "tubes", "gt_tubes")
    _, tubes = io.read_tubes(config.tubes)
    dets = io.read_detections(config.detections, tubes)
    truths = io.read_gt_tubes(config.gt_tubes)
    return auc_vs_threshold(dets, truths, config.thresholds, config.max_fpr)


def format_report(report: MetricReport, config, fmt) -> str:
    if fmt == "json":
        doc = {"config_hash": config.config_hash()}
        doc.update(report.to_dict())
        return io.dump_json(doc)
    rows = [["value", "", repr(float(report.value))]]
    rows += [["class", c, repr(float(v))] for c, v in sorted(report.per_class.items())]
    rows += [["curve", repr(float(t)), repr(float(v))] for t, v in report.curve]
    rows += [["flag", f, ""] for f in report.flags]
    return io.format_tsv(["kind", "key", "value"], rows,
                         {"metric": report.name, "config_hash": config.config_hash()})


def cmd_eval(config: RunConfig, metric: str, fmt="tsv") -> str:
    if metric == "accuracy":
        _require(config, "predictions", "ground_truth")
        preds = io.read_predictions(config.predictions)
        truth = io.read_ground_truth(config.ground_truth)
        missing = sum(1 for v in truth if v not in preds)
        if missing:
            logger.warning("%d ground-truth video(s) have no prediction", missing)
        report = average_class_accuracy(preds, truth)
    elif metric == "map":
        _require(config, "rankings", "ground_truth")
        report = mean_average_precision(io.read_rankings(config.rankings), io.read_ground_truth(config.ground_truth))
    elif metric == "auc":
        report = _auc_report(config)
    else:
        raise InputError(f"unknown metric {metric!r}")
    return format_report(report, config, fmt)


def cmd_plot_data(config: RunConfig) -> str:
    report = _auc_report(config)
    return io.format_tsv(["threshold", "auc"], ([repr(t), repr(v)] for t, v in report.curve),
                         {"metric": report.name, "config_hash": config.config_hash()})


# argument parsing

def _add_config_args(p):
    p.add_argument("--config", help="JSON run configuration")
    for name in ("embeddings", "object_labels", "action_labels", "labels", "scores", "tubes",
                 "ground_truth", "gt_tubes", "model", "affinity", "predictions", "rankings", "detections"):
        p.add_argument("--" + name.replace("_", "-"), dest=name)
    p.add_argument("--encoder", choices=["awv", "fwv"])
    p.add_argument("--k", type=int)
    p.add_argument("--pca-factor", type=int)
    p.add_argument("--fwv-blocks", choices=["mean", "mean+variance"])
    p.add_argument("--normalize-labels", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-z", type=int, help="action sparsity; 0 disables")
    p.add_argument("--t-v", type=int, help="video sparsity; 0 disables")
    p.add_argument("--alpha", type=float)
    p.add_argument("--normalize-videos", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--pipeline-order", choices=["normalize-first", "sparsify-first"])
    p.add_argument("--nms", type=float)
    p.add_argument("--detection-limit", type=int)
    p.add_argument("--thresholds", type=lambda s: [float(x) for x in s.split(",")],
                   help="comma-separated overlap thresholds")
    p.add_argument("--max-fpr", type=float)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=["tsv", "json"])


def build_parser():
    parser = argparse.ArgumentParser(prog="zsaction", description="Zero-shot action recognition from object scores.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("fit-gmm", "fit PCA and the word mixture on object-label words"),
        ("encode", "encode a label list"),
        ("translate", "build the sparsified object-action affinity matrix"),
        ("classify", "zero-shot classification of videos"),
        ("retrieve", "rank videos per action"),
        ("localize", "select top tube detections per video"),
        ("eval", "compute a metric report"),
        ("plot-data", "emit AUC-vs-overlap curve points"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_config_args(p)
        if name == "retrieve":
            p.add_argument("--action", action="append", help="restrict to this action (repeatable)")
        if name == "eval":
            p.add_argument("--metric", choices=["accuracy", "map", "auc"], required=True)
    return parser


_OVERRIDE_KEYS = [
    "embeddings", "object_labels", "action_labels", "labels", "scores", "tubes", "ground_truth", "gt_tubes",
    "model", "affinity", "predictions", "rankings", "detections", "encoder", "k", "pca_factor", "fwv_blocks",
    "normalize_labels", "seed", "alpha", "normalize_videos", "pipeline_order", "nms", "detection_limit",
    "thresholds", "max_fpr",
]


def config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
    for key in ("t_z", "t_v"):
        v = getattr(args, key)
        if v is not None and v > 0:
            overrides[key] = v
    config = load_config(args.config, overrides)
    for key in ("t_z", "t_v"):
        if getattr(args, key) == 0:
            setattr(config, key, None)
    return config


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for numerical failures here
        return 0 if e.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        fmt = _fmt_for(args.output, args.format)
        if args.command == "fit-gmm":
            text = cmd_fit_gmm(config)
        elif args.command == "encode":
            text = cmd_encode(config)
        elif args.command == "translate":
            text = cmd_translate(config)
        elif args.command == "classify":
            text = cmd_classify(config, fmt)
        elif args.command == "retrieve":
            text = cmd_retrieve(config, args.action)
        elif args.command == "localize":
            text = cmd_localize(config, fmt)
        elif args.command == "eval":
            text = cmd_eval(config, args.metric, fmt)
        else:
            text = cmd_plot_data(config)
        io.atomic_write(args.output, text)
    except (InputError, OSError) as e:
        logger.error("%s", e)
        return 1
    except NumericalError as e:
        logger.error("numerical failure: %s", e)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
