"""Command-line interface.

Subcommands: stats, compress, evaluate, search. Exit codes: 0 success,
2 usage error, 3 data-format error, 4 numerical failure.

Activation files hold X as n x p (neurons x samples). The Gram-style
reductions (X X^T, means, per-unit responses, rate counts) stream over
column blocks so activation files never need to fit in memory; tune the
block width with --block-cols.

Identical inputs and flags give byte-identical output files; the only
nondeterministic value is the wall_clock_seconds field of report JSONs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .compress import (
    ActivationBatch,
    CompressionMethod,
    RidgeConfig,
    bias_compensate,
    compensated_bias,
    dalr_compress,
    dalr_from_gram,
    matched_pruning_budget,
    parameter_fraction,
    prune_with_scores,
    svd_truncate,
)
from .errors import (
    BatchError,
    DecompositionError,
    DimensionError,
    NoActivationsError,
    NumericalError,
    RankError,
    SingularSystemError,
)
from .matio import (
    ManifestError,
    MatrixFormatError,
    SpliceRecord,
    iter_matrix_blocks,
    load_network,
    read_matrix,
    save_network,
    write_matrix,
)
from .network import (
    Activation,
    LabeledBatch,
    Network,
    accuracy,
    apply_pruning,
    extract_activations,
    forward,
    splice,
)
from .search import SearchConfig, joint_rank_search, write_trace_csv, write_trace_jsonl
from .stats import compare_profiles, profile_from_rates, write_rate_curve, write_skew_curves


class UsageError(Exception):
    pass


def _stream_gram_and_mean(path, block_cols):
    """One pass over column blocks: returns (X X^T, column mean, sample count)."""
    gram = None
    total = None
    count = 0
    for block in iter_matrix_blocks(path, block_cols):
        if gram is None:
            n = block.shape[0]
            gram = np.zeros((n, n))
            total = np.zeros(n)
        gram += block @ block.T
        total += block.sum(axis=1)
        count += block.shape[1]
    return gram, total / count, count


def _stream_unit_scores(path, layer, block_cols):
    """Streamed per-unit MEAN and MAX of max(0, W x + b) over the batch."""
    total = np.zeros(layer.out_features)
    peak = np.full(layer.out_features, -np.inf)
    count = 0
    for block in iter_matrix_blocks(path, block_cols):
        if block.shape[0] != layer.in_features:
            raise DimensionError(
                f"activation file has {block.shape[0]} dimensions, "
                f"layer expects {layer.in_features}"
            )
        responses = np.maximum(layer.apply(block), 0.0)
        total += responses.sum(axis=1)
        peak = np.maximum(peak, responses.max(axis=1))
        count += block.shape[1]
    return total / count, peak, count


def _stream_rates(path, threshold, block_cols):
    counts = None
    total = 0
    for block in iter_matrix_blocks(path, block_cols):
        if counts is None:
            counts = np.zeros(block.shape[0], dtype=np.int64)
        counts += (block > threshold).sum(axis=1)
        total += block.shape[1]
    return counts / total


def _stream_pair_error(path, layer, pair, block_cols):
    """Streamed layer-output error of a factor pair, bias included."""
    delta_w = layer.weights - pair.product()
    delta_b = layer.bias - pair.new_bias
    sq = 0.0
    for block in iter_matrix_blocks(path, block_cols):
        diff = delta_w @ block + delta_b[:, None]
        sq += float(np.sum(diff * diff))
    return float(np.sqrt(sq))


def _stream_prune_error(path, layer, kept, block_cols):
    """Norm of the post-ReLU responses lost by dropping the other units."""
    removed = np.setdiff1d(np.arange(layer.out_features), kept)
    if removed.size == 0:
        return 0.0
    w = layer.weights[removed, :]
    b = layer.bias[removed]
    sq = 0.0
    for block in iter_matrix_blocks(path, block_cols):
        responses = np.maximum(w @ block + b[:, None], 0.0)
        sq += float(np.sum(responses * responses))
    return float(np.sqrt(sq))


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_labels(path):
    raw = read_matrix(path)
    if raw.shape[0] != 1:
        raise BatchError(f"label files must be 1 x p, got {raw.shape}")
    return raw[0]


def _post_relu_flag(net: Network, layer_index: int) -> bool:
    return layer_index > 0 and net.activations[layer_index - 1] == Activation.RELU


def cmd_stats(args) -> int:
    rates = _stream_rates(args.acts, args.threshold, args.block_cols)
    profile = profile_from_rates(rates)
    summary = {
        "neurons": int(rates.size),
        "half_mass_fraction": profile.half_mass_fraction,
        "mean_rate": float(rates.mean()),
    }
    if args.compare:
        other = profile_from_rates(_stream_rates(args.compare, args.threshold,
                                                 args.block_cols))
        report = compare_profiles(profile, other)
        write_skew_curves(report, args.out)
        summary["compare_half_mass_fraction"] = report.target_half_mass
        summary["half_mass_ratio"] = report.ratio
    else:
        write_rate_curve(profile, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_compress(args) -> int:
    started = time.perf_counter()
    net, _ = load_network(args.net)
    if not 0 <= args.layer < len(net.layers):
        raise UsageError(f"--layer {args.layer} outside [0, {len(net.layers) - 1}]")
    layer = net.layers[args.layer]
    m, n = layer.out_features, layer.in_features
    method = args.method
    needs_acts = method in ("svd-bc", "dalr", "prune-mean", "prune-max")
    if needs_acts and not args.acts:
        raise UsageError(f"--method {method} requires --acts")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = {"method": method, "layer_index": args.layer}
    prefix = f"layer{args.layer}_{method}"

    if method in ("prune-mean", "prune-max"):
        if args.keep is None and args.rank is None:
            raise UsageError("pruning needs --keep or --rank (budget-matched)")
        keep = args.keep if args.keep is not None else matched_pruning_budget(m, n, args.rank)
        mean_scores, max_scores, _ = _stream_unit_scores(args.acts, layer, args.block_cols)
        scores = mean_scores if method == "prune-mean" else max_scores
        pruned, kept = prune_with_scores(layer, scores, keep)
        new_net = apply_pruning(net, args.layer, pruned, kept)
        write_matrix(out / f"{prefix}_w.dmat", pruned.weights)
        write_matrix(out / f"{prefix}_b.dmat", pruned.bias.reshape(1, -1))
        with open(out / f"{prefix}_kept_indices.json", "w") as fh:
            json.dump([int(i) for i in kept], fh)
            fh.write("\n")
        report.update({
            "kept_units": int(keep),
            "rank": None,
            "lambda": 0.0,
            "parameter_fraction": keep / m,
            "epsilon": _stream_prune_error(args.acts, layer, kept, args.block_cols),
            "error_basis": "activations",
        })
        manifest = save_network(new_net, out)
    else:
        if args.rank is None:
            raise UsageError(f"--method {method} requires --rank")
        k = args.rank
        if not 1 <= k <= min(m, n):
            raise RankError(f"rank {k} outside [1, {min(m, n)}] for {m}x{n} layer")
        if (m + n) * k >= m * n:
            print(
                f"warning: rank {k} keeps (m+n)k = {(m + n) * k} >= mn = {m * n} "
                "parameters; no compression",
                file=sys.stderr,
            )
        if method == "svd":
            pair = svd_truncate(layer, k)
            if args.acts:
                pair_err = _stream_pair_error(args.acts, layer, pair, args.block_cols)
                report.update({"epsilon": pair_err, "error_basis": "activations"})
            else:
                report.update({
                    "epsilon": float(np.linalg.norm(layer.weights - pair.product())),
                    "error_basis": "weights",
                })
        elif method == "svd-bc":
            gram, mean, _ = _stream_gram_and_mean(args.acts, args.block_cols)
            if gram.shape[0] != n:
                raise DimensionError(
                    f"activation file has {gram.shape[0]} dimensions, layer expects {n}"
                )
            pair = svd_truncate(layer, k)
            pair = dataclasses.replace(pair, new_bias=compensated_bias(layer, pair, mean),
                                       method=CompressionMethod.SVD_BC)
            report.update({
                "epsilon": _stream_pair_error(args.acts, layer, pair, args.block_cols),
                "error_basis": "activations",
            })
        else:  # dalr
            gram, mean, _ = _stream_gram_and_mean(args.acts, args.block_cols)
            if gram.shape[0] != n:
                raise DimensionError(
                    f"activation file has {gram.shape[0]} dimensions, layer expects {n}"
                )
            ridge = RidgeConfig(args.lam) if args.lam is not None else RidgeConfig()
            pair = dalr_from_gram(layer, gram, k, ridge)
            report.update({
                "epsilon": _stream_pair_error(args.acts, layer, pair, args.block_cols),
                "error_basis": "activations",
            })
        write_matrix(out / f"{prefix}_k{k}_a.dmat", pair.a)
        write_matrix(out / f"{prefix}_k{k}_b.dmat", pair.b)
        write_matrix(out / f"{prefix}_k{k}_bias.dmat", pair.new_bias.reshape(1, -1))
        new_net = splice(net, args.layer, pair)
        report.update({
            "rank": k,
            "lambda": pair.lam,
            "parameter_fraction": parameter_fraction(m, n, k),
        })
        manifest = save_network(new_net, out)

    if bool(args.eval_inputs) != bool(args.eval_labels):
        raise UsageError("--eval-inputs and --eval-labels go together")
    if args.eval_inputs:
        batch = LabeledBatch(read_matrix(args.eval_inputs), _load_labels(args.eval_labels))
        report["accuracy_before"] = accuracy(net, batch)
        report["accuracy_after"] = accuracy(new_net, batch)
    report["wall_clock_seconds"] = time.perf_counter() - started
    _write_json(out / "report.json", report)
    print(f"wrote {manifest}")
    return 0


def cmd_evaluate(args) -> int:
    net, _ = load_network(args.net)
    inputs = read_matrix(args.inputs)
    outputs = forward(net, inputs)
    result = {"samples": int(inputs.shape[1])}
    if args.reference:
        ref_net, _ = load_network(args.reference)
        ref_outputs = forward(ref_net, inputs)
        if ref_outputs.shape != outputs.shape:
            raise DimensionError(
                f"reference outputs {ref_outputs.shape} do not match {outputs.shape}"
            )
        result["epsilon"] = float(np.linalg.norm(ref_outputs - outputs))
    if args.labels:
        batch = LabeledBatch(inputs, _load_labels(args.labels))
        result["accuracy"] = accuracy(net, batch)
        if args.reference:
            result["reference_accuracy"] = accuracy(ref_net, batch)
    _write_json(args.out, result)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def _parse_layers(spec: str) -> tuple[int, int]:
    parts = spec.split(",")
    if len(parts) != 2:
        raise UsageError(f"--layers wants two comma-separated indices, got {spec!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise UsageError(f"--layers wants integers, got {spec!r}") from exc
    return a, b


def _parse_schedules(spec: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    halves = spec.split(";")
    if len(halves) != 2:
        raise UsageError(
            f"--schedule wants 'ranksA;ranksB' (e.g. '16,8,4;16,8'), got {spec!r}"
        )
    try:
        return tuple(
            tuple(int(tok) for tok in half.split(",") if tok) for half in halves
        )
    except ValueError as exc:
        raise UsageError(f"--schedule contains a non-integer in {spec!r}") from exc


def cmd_search(args) -> int:
    net, _ = load_network(args.net)
    layer_a, layer_b = _parse_layers(args.layers)
    schedule_a, schedule_b = _parse_schedules(args.schedule)
    val = LabeledBatch(read_matrix(args.val_inputs), _load_labels(args.val_labels))
    method = CompressionMethod(args.method)
    acts = {}
    if method != CompressionMethod.SVD:
        if not args.acts_dir:
            raise UsageError(f"--method {method.value} requires --acts-dir")
        acts_dir = Path(args.acts_dir)
        for idx in (layer_a, layer_b):
            acts_path = acts_dir / f"layer{idx}.dmat"
            if not acts_path.exists():
                raise UsageError(f"missing activation file {acts_path}")
            acts[idx] = ActivationBatch(read_matrix(acts_path),
                                        post_relu=_post_relu_flag(net, idx))
    ridge = RidgeConfig(args.lam) if args.lam is not None else RidgeConfig()
    cfg = SearchConfig(
        rank_schedule_a=schedule_a,
        rank_schedule_b=schedule_b,
        max_drop=args.max_drop,
        method=method,
        ridge=ridge,
    )
    trace = joint_rank_search(net, layer_a, layer_b, val, acts, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_jsonl(trace, out / "trace.jsonl")
    write_trace_csv(trace, out / "summary.csv")

    final = net
    records = []
    for idx, rank in sorted(
        ((layer_a, trace.final_rank_a), (layer_b, trace.final_rank_b)), reverse=True
    ):
        if rank is None:
            continue
        layer = net.layers[idx]
        if method == CompressionMethod.SVD:
            pair = svd_truncate(layer, rank)
        elif method == CompressionMethod.SVD_BC:
            pair = bias_compensate(layer, svd_truncate(layer, rank), acts[idx])
        else:
            pair = dalr_compress(layer, acts[idx], rank, ridge)
        final = splice(final, idx, pair)
        records.append(SpliceRecord(original_index=idx, method=method.value,
                                    rank=rank, lam=pair.lam))
    save_network(final, out, splices=sorted(records, key=lambda r: r.original_index))
    print(f"baseline {trace.baseline_accuracy:.4f} -> final {trace.final_accuracy:.4f} "
          f"ranks ({trace.final_rank_a}, {trace.final_rank_b}) "
          f"total reduction {trace.reduction_total:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrcompress",
        description="Compress fully connected layers with low-rank decompositions "
        "driven by target-domain activations.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="activation-rate profile of a batch file")
    p.add_argument("--acts", required=True, help="activation matrix file (n x p)")
    p.add_argument("--compare", help="second batch for a skew report")
    p.add_argument("--out", required=True, help="output CSV for the ranked-rate curve")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="activity threshold (default 0, strict)")
    p.add_argument("--block-cols", type=int, default=4096)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compress", help="compress one layer of a network")
    p.add_argument("--net", required=True, help="network manifest")
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--method", required=True,
                   choices=["svd", "svd-bc", "dalr", "prune-mean", "prune-max"])
    p.add_argument("--rank", type=int)
    p.add_argument("--keep", type=int, help="units to keep when pruning")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="ridge weight (default: scale-aware)")
    p.add_argument("--acts", help="activation matrix file (n x p)")
    p.add_argument("--eval-inputs", help="optional labeled batch for accuracy reporting")
    p.add_argument("--eval-labels")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--block-cols", type=int, default=4096)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("evaluate", help="forward a batch, report error and accuracy")
    p.add_argument("--net", required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--labels")
    p.add_argument("--reference", help="manifest of the network to compare outputs against")
    p.add_argument("--out", required=True, help="output JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="greedy joint-rank search over two layers")
    p.add_argument("--net", required=True)
    p.add_argument("--layers", required=True, help="two comma-separated layer indices")
    p.add_argument("--val-inputs", required=True)
    p.add_argument("--val-labels", required=True)
    p.add_argument("--acts-dir", help="directory holding layer<i>.dmat activation files")
    p.add_argument("--schedule", required=True, help="'ranksA;ranksB', e.g. '16,8,4;16,8'")
    p.add_argument("--max-drop", type=float, default=0.01)
    p.add_argument("--method", default="dalr", choices=["svd", "svd-bc", "dalr"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_search)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MatrixFormatError, ManifestError, BatchError, DimensionError,
            NoActivationsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DecompositionError, SingularSystemError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
