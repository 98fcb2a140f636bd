"""Greedy joint-rank search over two layers.

Each iteration evaluates two candidate networks, one advancing layer A a
step down its rank schedule and one advancing layer B, and applies
whichever scores higher on the validation batch. The loop ends when both
candidates fall more than the allowed drop below the uncompressed
baseline, or when neither schedule has a step left.

Candidates are always recompressed from the original weights at the new
rank, with activations extracted from the original network once; both
choices avoid compounding approximation error.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .compress import (
    ActivationBatch,
    CompressionMethod,
    FactorPair,
    RidgeConfig,
    bias_compensate,
    dalr_compress,
    parameter_fraction,
    svd_truncate,
)
from .errors import DimensionError, RankError
from .network import LabeledBatch, Network, accuracy, extract_activations, splice

__all__ = [
    "SearchConfig",
    "SearchStep",
    "SearchTrace",
    "joint_rank_search",
    "write_trace_csv",
    "write_trace_jsonl",
]


@dataclass(frozen=True)
class SearchConfig:
    """Schedules and stop rule for the joint search.

    rank_schedule_a / rank_schedule_b: strictly descending ranks tried per
    layer. max_drop: largest tolerated accuracy loss relative to the
    uncompressed baseline (drop_relative_to_previous switches the
    reference to the last applied step instead). reextract_activations
    re-reads each layer's inputs from the partially compressed network
    before every candidate compression rather than using the one-shot
    extraction from the original network.
    """

    rank_schedule_a: tuple[int, ...]
    rank_schedule_b: tuple[int, ...]
    max_drop: float = 0.01
    method: CompressionMethod = CompressionMethod.DALR
    ridge: RidgeConfig = RidgeConfig(0.0)
    reextract_activations: bool = False
    drop_relative_to_previous: bool = False

    def __post_init__(self):
        for name, schedule in (("rank_schedule_a", self.rank_schedule_a),
                               ("rank_schedule_b", self.rank_schedule_b)):
            schedule = tuple(int(k) for k in schedule)
            if not schedule:
                raise RankError(f"{name} must be non-empty")
            if any(b >= a for a, b in zip(schedule, schedule[1:])):
                raise RankError(f"{name} must be strictly descending, got {schedule}")
            if schedule[-1] < 1:
                raise RankError(f"{name} contains ranks below 1")
            object.__setattr__(self, name, schedule)
        if self.max_drop < 0:
            raise RankError(f"max_drop must be non-negative, got {self.max_drop}")
        object.__setattr__(self, "method", CompressionMethod(self.method))


@dataclass(frozen=True)
class SearchStep:
    step: int
    layer_index: int
    rank_a: int | None
    rank_b: int | None
    accuracy: float


@dataclass(frozen=True)
class SearchTrace:
    baseline_accuracy: float
    steps: tuple[SearchStep, ...]
    final_rank_a: int | None
    final_rank_b: int | None
    final_accuracy: float
    reduction_a: float
    reduction_b: float
    reduction_total: float


def _compress_layer(net: Network, layer_index: int, rank: int, cfg: SearchConfig,
                    acts: ActivationBatch | None) -> FactorPair:
    layer = net.layers[layer_index]
    if cfg.method == CompressionMethod.SVD:
        return svd_truncate(layer, rank)
    if acts is None:
        raise DimensionError(
            f"method {cfg.method.value} needs activations for layer {layer_index}"
        )
    if cfg.method == CompressionMethod.SVD_BC:
        return bias_compensate(layer, svd_truncate(layer, rank), acts)
    return dalr_compress(layer, acts, rank, cfg.ridge)


def joint_rank_search(net: Network, layer_a: int, layer_b: int, val: LabeledBatch,
                      train_acts: dict[int, ActivationBatch], cfg: SearchConfig,
                      train_inputs: np.ndarray | None = None) -> SearchTrace:
    """Run the greedy two-layer search and return the full trace.

    train_acts maps each searched layer index to the batch feeding it in
    the original network (consulted by activation-aware methods). Ties
    between the two candidates go to layer A. train_inputs is only needed
    when cfg.reextract_activations is set.
    """
    n_layers = len(net.layers)
    if not (0 <= layer_a < n_layers and 0 <= layer_b < n_layers):
        raise IndexError(f"layer indices {layer_a}, {layer_b} outside [0, {n_layers - 1}]")
    if layer_a == layer_b:
        raise RankError("joint search needs two distinct layers")
    dims = {}
    for idx, schedule in ((layer_a, cfg.rank_schedule_a), (layer_b, cfg.rank_schedule_b)):
        layer = net.layers[idx]
        dims[idx] = (layer.out_features, layer.in_features)
        limit = min(layer.out_features, layer.in_features)
        if schedule[0] > limit:
            raise RankError(
                f"schedule for layer {idx} starts at {schedule[0]}, above rank limit {limit}"
            )
    needs_acts = cfg.method != CompressionMethod.SVD
    if needs_acts and not cfg.reextract_activations:
        for idx in (layer_a, layer_b):
            if idx not in train_acts:
                raise DimensionError(f"no activation batch supplied for layer {idx}")
    if cfg.reextract_activations and needs_acts and train_inputs is None:
        raise DimensionError("reextract_activations requires train_inputs")

    baseline = accuracy(net, val)
    applied: dict[int, FactorPair] = {}
    pair_cache: dict[tuple[int, int], FactorPair] = {}

    def compose(extra: dict[int, FactorPair]) -> Network:
        # splice the higher index first so the lower one stays valid
        out = net
        pairs = {**applied, **extra}
        for idx in sorted(pairs, reverse=True):
            out = splice(out, idx, pairs[idx])
        return out

    def current_acts(layer_index: int) -> ActivationBatch | None:
        if not needs_acts:
            return None
        if not cfg.reextract_activations:
            return train_acts[layer_index]
        others = {i: p for i, p in applied.items() if i != layer_index}
        base = net
        for idx in sorted(others, reverse=True):
            base = splice(base, idx, others[idx])
        shift = sum(1 for idx in others if idx < layer_index)
        return extract_activations(base, train_inputs, layer_index + shift)

    def make_pair(layer_index: int, rank: int) -> FactorPair:
        if cfg.reextract_activations and needs_acts:
            return _compress_layer(net, layer_index, rank, cfg, current_acts(layer_index))
        key = (layer_index, rank)
        if key not in pair_cache:
            pair_cache[key] = _compress_layer(net, layer_index, rank, cfg,
                                              current_acts(layer_index))
        return pair_cache[key]

    pos_a = -1
    pos_b = -1
    steps: list[SearchStep] = []
    current_accuracy = baseline

    while True:
        candidates = []
        if pos_a + 1 < len(cfg.rank_schedule_a):
            rank = cfg.rank_schedule_a[pos_a + 1]
            pair = make_pair(layer_a, rank)
            candidates.append((layer_a, rank, pair,
                               accuracy(compose({layer_a: pair}), val)))
        if pos_b + 1 < len(cfg.rank_schedule_b):
            rank = cfg.rank_schedule_b[pos_b + 1]
            pair = make_pair(layer_b, rank)
            candidates.append((layer_b, rank, pair,
                               accuracy(compose({layer_b: pair}), val)))
        if not candidates:
            break
        # max keeps the first of equal candidates, so ties go to layer A
        best = max(candidates, key=lambda c: c[3])
        reference = current_accuracy if cfg.drop_relative_to_previous else baseline
        if reference - best[3] > cfg.max_drop:
            break
        if best[0] == layer_a:
            pos_a += 1
        else:
            pos_b += 1
        applied[best[0]] = best[2]
        current_accuracy = best[3]
        steps.append(SearchStep(
            step=len(steps) + 1,
            layer_index=best[0],
            rank_a=cfg.rank_schedule_a[pos_a] if pos_a >= 0 else None,
            rank_b=cfg.rank_schedule_b[pos_b] if pos_b >= 0 else None,
            accuracy=best[3],
        ))

    final_a = cfg.rank_schedule_a[pos_a] if pos_a >= 0 else None
    final_b = cfg.rank_schedule_b[pos_b] if pos_b >= 0 else None
    m_a, n_a = dims[layer_a]
    m_b, n_b = dims[layer_b]
    red_a = parameter_fraction(m_a, n_a, final_a) if final_a is not None else 1.0
    red_b = parameter_fraction(m_b, n_b, final_b) if final_b is not None else 1.0
    kept = (red_a * m_a * n_a) + (red_b * m_b * n_b)
    return SearchTrace(
        baseline_accuracy=baseline,
        steps=tuple(steps),
        final_rank_a=final_a,
        final_rank_b=final_b,
        final_accuracy=steps[-1].accuracy if steps else baseline,
        reduction_a=red_a,
        reduction_b=red_b,
        reduction_total=kept / (m_a * n_a + m_b * n_b),
    )


def write_trace_jsonl(trace: SearchTrace, path) -> None:
    """One JSON record per applied step."""
    with open(path, "w") as fh:
        for step in trace.steps:
            fh.write(json.dumps({
                "step": step.step,
                "layer_index": step.layer_index,
                "rank_a": step.rank_a,
                "rank_b": step.rank_b,
                "accuracy": step.accuracy,
            }, sort_keys=True))
            fh.write("\n")


def write_trace_csv(trace: SearchTrace, path) -> None:
    """Single-row summary: final ranks, reductions, and accuracies."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "baseline_accuracy", "final_accuracy", "steps",
            "final_rank_a", "final_rank_b",
            "reduction_a", "reduction_b", "reduction_total",
        ])
        writer.writerow([
            repr(trace.baseline_accuracy), repr(trace.final_accuracy),
            len(trace.steps),
            "" if trace.final_rank_a is None else trace.final_rank_a,
            "" if trace.final_rank_b is None else trace.final_rank_b,
            repr(trace.reduction_a), repr(trace.reduction_b),
            repr(trace.reduction_total),
        ])
