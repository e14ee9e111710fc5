"""Command-line interface: reproducible batch runs over all metrics.

Exit codes: 0 on success, 1 on validation/input errors (single-line
diagnostic on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import abx as abx_mod
from . import io_formats as io
from . import metrics as metrics_mod
from . import quantizer as quant_mod
from . import sampler as sampler_mod
from . import scoring as scoring_mod
from .types import MetricReport


class UsageError(Exception):
    """Bad flag combinations detected after parsing."""


def _default_threads() -> int:
    env = os.environ.get("ZRC_EVAL_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zrc-eval",
        description="Zero-shot evaluation toolkit for spoken language models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abx", help="phonetic discriminability over an item set")
    p.add_argument("--items", required=True, help="triphone item file")
    p.add_argument("--features", required=True, help="feature archive directory")
    p.add_argument("--mode", choices=("within", "across"), default="within")
    p.add_argument("--distance", choices=("angular", "kl"), default="angular")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "json"), default=None)
    p.set_defaults(func=cmd_abx)

    p = sub.add_parser("kmeans-train", help="fit a codebook on pooled frames")
    p.add_argument("--features", required=True, help="feature archive directory")
    p.add_argument("--k", type=int, default=quant_mod.DEFAULT_CLUSTERS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--subsample", type=int, default=None,
                   help="cap on training frames (seeded reservoir sampling)")
    p.add_argument("--out", required=True, help="output codebook file")
    p.add_argument("--report", default=None, help="optional training report")
    p.set_defaults(func=cmd_kmeans_train)

    p = sub.add_parser("quantize", help="discretize an archive with a codebook")
    p.add_argument("--codebook", required=True)
    p.add_argument("--features", required=True, help="feature archive directory")
    p.add_argument("--out", required=True, help="output unit-sequence file")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("ngram-train", help="train an n-gram control model")
    p.add_argument("--units", required=True, help="unit-sequence file")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_ngram_train)

    for name, helptext in (("score-lexical", "spot-the-word accuracy"),
                           ("score-syntactic", "acceptability accuracy")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--pairs", required=True, help="pair manifest TSV")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--scores", help="external utterance score TSV")
        src.add_argument("--ngram-model", help="model JSON; needs --units")
        src.add_argument("--masked-table",
                         help="external masked-window score TSV; needs --units")
        p.add_argument("--units", help="unit-sequence file for model scoring")
        p.add_argument("--span", type=int, default=15,
                       help="decoding span size for masked scoring")
        p.add_argument("--stride", type=int, default=5,
                       help="temporal sliding size for masked scoring")
        p.add_argument("--per-token", action="store_true",
                       help="normalize model scores by sequence length")
        p.add_argument("--tie", choices=("half", "zero"), default="half")
        p.add_argument("--out", required=True)
        p.add_argument("--format", choices=("tsv", "json"), default=None)
        p.set_defaults(func=cmd_score_pairs, metric_name=name.replace("score-", ""))

    p = sub.add_parser("score-semantic", help="similarity vs human judgments")
    p.add_argument("--gold", required=True, help="similarity gold TSV")
    p.add_argument("--features", required=True, nargs="+",
                   help="hidden-state archive directories, one per layer")
    p.add_argument("--pooling", choices=("mean", "max", "min", "sweep"),
                   default="sweep")
    p.add_argument("--layer", type=int, default=0,
                   help="layer index when not sweeping")
    p.add_argument("--subset", choices=("synthetic", "natural"),
                   default="synthetic")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "json"), default=None)
    p.set_defaults(func=cmd_score_semantic)

    p = sub.add_parser("sample-pairs",
                       help="balance paired datasets toward chance accuracy")
    p.add_argument("--candidates", required=True, help="candidate set TSV")
    p.add_argument("--mode", choices=("words", "sentences"), default="words")
    p.add_argument("--k-target", type=int, default=None,
                   help="subset size for sentence mode")
    p.add_argument("--per-stratum", action="store_true",
                   help="stratify sentence sampling by stratum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--out", required=True, help="output assignment TSV")
    p.add_argument("--report", default=None, help="optional balance report")
    p.set_defaults(func=cmd_sample_pairs)

    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_abx(args) -> int:
    items = io.read_item_file(args.items)
    result = abx_mod.abx_evaluate(
        items, args.features, args.mode, args.distance, threads=args.threads)
    report = MetricReport(
        metric="abx",
        aggregate=result.error_rate,
        subsets=result.by_phone_pair,
        counts={"cells": result.cell_count},
        config={"mode": args.mode, "distance": args.distance,
                "threads": str(args.threads)},
    )
    io.write_report(report, args.out, args.format)
    return 0


def cmd_kmeans_train(args) -> int:
    archive = io.FeatureArchive(args.features)
    utt_ids = io.list_archive(args.features)
    if not utt_ids:
        raise ValueError(f"no feature files under {args.features}")
    sequences = [archive.load(u) for u in utt_ids]
    frames = np.concatenate([fs.frames for fs in sequences])
    codebook = quant_mod.kmeans_fit(
        frames, args.k, seed=args.seed, max_iter=args.max_iter, tol=args.tol,
        frame_rate=sequences[0].frame_rate, subsample=args.subsample)
    quant_mod.write_codebook(codebook, args.out)
    if args.report:
        report = MetricReport(
            metric="kmeans",
            aggregate=codebook.inertia,
            counts={"frames": frames.shape[0], "iterations": codebook.n_iter},
            config={"k": str(args.k), "seed": str(args.seed),
                    "max_iter": str(args.max_iter), "tol": str(args.tol),
                    "subsample": str(args.subsample)},
        )
        io.write_report(report, args.report)
    return 0


def cmd_quantize(args) -> int:
    codebook = quant_mod.read_codebook(args.codebook)
    archive = io.FeatureArchive(args.features)
    sequences = [quant_mod.quantize(codebook, archive.load(u))
                 for u in io.list_archive(args.features)]
    if not sequences:
        raise ValueError(f"no feature files under {args.features}")
    io.write_unit_sequences(sequences, args.out)
    return 0


def cmd_ngram_train(args) -> int:
    corpus = io.read_unit_sequences(args.units)
    model = scoring_mod.ngram_train(corpus, args.order, args.alpha)
    scoring_mod.save_ngram_model(model, args.out)
    return 0


def _pair_scores(args) -> dict:
    if args.scores:
        return io.read_external_scores(args.scores)
    if not args.units:
        raise UsageError("--units is required with --ngram-model/--masked-table")
    sequences = io.read_unit_sequences(args.units)
    if args.ngram_model:
        model = scoring_mod.load_ngram_model(args.ngram_model)
        return {seq.utt_id: scoring_mod.chain_rule_logprob(
                    model, seq, per_token=args.per_token).log_score
                for seq in sequences}
    scorer = scoring_mod.ExternalMaskedScorer(
        scoring_mod.read_masked_scores(args.masked_table))
    cfg = scoring_mod.SpanConfig(args.span, args.stride)
    return {seq.utt_id: scoring_mod.span_pseudo_logprob(
                scorer, seq, cfg, per_token=args.per_token).log_score
            for seq in sequences}


def cmd_score_pairs(args) -> int:
    pairs = io.read_pair_manifest(args.pairs)
    scores = _pair_scores(args)
    acc = metrics_mod.paired_accuracy(pairs, scores, args.tie)
    config = {"tie": args.tie,
              "source": ("scores" if args.scores else
                         "ngram" if args.ngram_model else "masked")}
    if not args.scores:
        config["per_token"] = str(args.per_token)
    if args.masked_table:
        config["span"] = str(args.span)
        config["stride"] = str(args.stride)
    report = MetricReport(
        metric=f"{args.metric_name}-accuracy",
        aggregate=acc.overall,
        subsets=acc.per_tag,
        counts=dict(acc.tag_counts, pairs=acc.pair_count, ties=acc.tie_count),
        config=config,
    )
    io.write_report(report, args.out, args.format)
    return 0


def cmd_score_semantic(args) -> int:
    records = io.read_similarity_gold(args.gold)
    needed = set()
    for record in records:
        refs_a = record.refs_a or (("", record.word_a),)
        refs_b = record.refs_b or (("", record.word_b),)
        needed.update(utt for _, utt in refs_a)
        needed.update(utt for _, utt in refs_b)
    layers = []
    for directory in args.features:
        archive = io.FeatureArchive(directory)
        layers.append({utt: archive.load(utt).frames for utt in sorted(needed)})

    if args.pooling == "sweep":
        layer, pooling, score = metrics_mod.layer_sweep(
            layers, records, args.subset)
    else:
        layer, pooling = args.layer, args.pooling
        if not (0 <= layer < len(layers)):
            raise UsageError(f"--layer {layer} out of range for "
                             f"{len(layers)} archives")
        reprs = {utt: metrics_mod.pool(mat, pooling)
                 for utt, mat in layers[layer].items()}
        score = metrics_mod.similarity_score(records, reprs, args.subset)

    reprs = {utt: metrics_mod.pool(mat, pooling)
             for utt, mat in layers[layer].items()}
    subsets = {}
    counts = {}
    by_dataset: dict = {}
    for record in records:
        by_dataset.setdefault(record.dataset, []).append(record)
    for dataset, group in sorted(by_dataset.items()):
        counts[dataset] = len(group)
        if len(group) >= 2:
            try:
                subsets[dataset] = metrics_mod.similarity_score(
                    group, reprs, args.subset)
            except ValueError:
                pass  # constant scores within a subset: leave it out

    report = MetricReport(
        metric="semantic-similarity",
        aggregate=score,
        subsets=subsets,
        counts=dict(counts, records=len(records)),
        config={"pooling": pooling, "layer": str(layer),
                "subset": args.subset, "sweep": str(args.pooling == "sweep")},
    )
    io.write_report(report, args.out, args.format)
    return 0


def cmd_sample_pairs(args) -> int:
    cs = sampler_mod.read_candidate_set(args.candidates)
    if args.mode == "words":
        assignment = sampler_mod.sample_word_pairs(
            cs, seed=args.seed, restarts=args.restarts)
    else:
        if args.k_target is None:
            raise UsageError("--k-target is required in sentence mode")
        assignment = sampler_mod.sample_sentence_pairs(
            cs, args.k_target, seed=args.seed,
            per_stratum=args.per_stratum, restarts=args.restarts)
    sampler_mod.write_assignment(assignment, cs, args.out)
    if args.report:
        by_stratum: dict = {}
        for anchor in cs.anchors:
            if anchor.anchor_id in assignment.chosen:
                by_stratum.setdefault(anchor.stratum, {})[anchor.anchor_id] = \
                    assignment.chosen[anchor.anchor_id]
        report = MetricReport(
            metric="sampler-balance",
            aggregate=assignment.objective,
            subsets={s: sampler_mod.balance_objective(chosen, cs)
                     for s, chosen in sorted(by_stratum.items())},
            counts={s: len(chosen) for s, chosen in sorted(by_stratum.items())},
            config={"mode": args.mode, "seed": str(args.seed),
                    "restarts": str(args.restarts),
                    "restart_index": str(assignment.restart_index),
                    "k_target": str(args.k_target)},
        )
        io.write_report(report, args.report)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else (0 if code is None else 2)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
