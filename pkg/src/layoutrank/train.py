"""Minibatch training with category-balanced resampling.

Within every category, the rarer label is duplicated (sampling with
replacement) until both labels are equally common, so skewed categories
cannot drown out their minority class. The resample is redrawn each epoch
from an epoch-derived seed: duplicates vary across epochs while the whole
run stays reproducible. Model selection tracks the best validation AUC,
and the returned parameters are that snapshot, not the last step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .features import EncodedGraph, FeatureSchema
from .metrics import NoComparablePairs, SingleClass, auc, pnr, prf1
from .model import ModelConfig, ModelParams, forward_batch, score_graphs

__all__ = [
    "LabeledExample", "TrainConfig", "Diverged", "LengthMismatch",
    "upsample", "mse_loss", "train", "run_ablation",
]

logger = logging.getLogger(__name__)


class Diverged(RuntimeError):
    """Loss left the reals; learning rate or data needs attention."""


class LengthMismatch(ValueError):
    """Predictions and labels must pair up one-to-one."""


@dataclass(frozen=True)
class LabeledExample:
    graph: EncodedGraph
    label: float
    category: str = ""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 25
    seed: int = 0
    upsample: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


def upsample(examples: Sequence[LabeledExample], seed: int = 0) -> list[LabeledExample]:
    """Equalize label counts inside every category by duplicating the minority.

    Every original example is kept; a category that only ever shows one
    label passes through unchanged (there is nothing to balance against).
    The result is shuffled.
    """
    rng = np.random.default_rng(seed)
    groups: dict[tuple[str, float], list[LabeledExample]] = {}
    for ex in examples:
        groups.setdefault((ex.category, ex.label), []).append(ex)
    by_category: dict[str, list[tuple[float, list[LabeledExample]]]] = {}
    for (category, label), members in sorted(groups.items()):
        by_category.setdefault(category, []).append((label, members))

    out: list[LabeledExample] = []
    for category, labeled in sorted(by_category.items()):
        if len(labeled) == 1:
            logger.warning("category %r has a single label; not balanced", category)
            out.extend(labeled[0][1])
            continue
        target = max(len(members) for _, members in labeled)
        for _, members in labeled:
            out.extend(members)
            shortfall = target - len(members)
            if shortfall > 0:
                picks = rng.integers(0, len(members), size=shortfall)
                out.extend(members[j] for j in picks)
    rng.shuffle(out)
    return out


def mse_loss(tape: T.Tape | None, predictions: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Mean squared error between [n, 1] predictions and n labels."""
    labels = np.asarray(labels, dtype=float)
    if predictions.shape != (labels.size, 1):
        raise LengthMismatch(f"{predictions.shape} predictions vs {labels.size} labels")
    diff = T.sub(tape, predictions, T.Tensor(labels.reshape(-1, 1)))
    return T.mean_all(tape, T.mul(tape, diff, diff))


def _batches(pool: list, size: int):
    for start in range(0, len(pool), size):
        yield pool[start:start + size]


def _val_metrics(params: ModelParams, examples: Sequence[LabeledExample]) -> dict:
    scores = score_graphs(params, [ex.graph for ex in examples])
    labels = [ex.label for ex in examples]
    out: dict[str, float | None] = {"auc": None, "pnr": None, "f1": None}
    try:
        out["auc"] = auc(labels, scores)
    except SingleClass:
        pass
    try:
        value = pnr(labels, scores)
        out["pnr"] = None if math.isnan(value) else value
    except NoComparablePairs:
        pass
    out["f1"] = prf1(labels, scores).f1
    return out


def train(examples: Sequence[LabeledExample], val_examples: Sequence[LabeledExample],
          config: TrainConfig, schema: FeatureSchema) -> tuple[ModelParams, list[dict]]:
    """Returns the best-validation parameters and the per-epoch history."""
    if not examples:
        raise ValueError("no training examples")
    params = ModelParams.init(config.model, schema, seed=config.seed)
    leaves = params.all()
    state = T.AdamState.for_params(leaves)
    rng = np.random.default_rng(config.seed)

    history: list[dict] = []
    best_key: tuple = ()
    best_arrays: list[np.ndarray] | None = None
    for epoch in range(config.epochs):
        if config.upsample:
            pool = upsample(examples, seed=config.seed * 100_003 + epoch)
        else:
            pool = list(examples)
            rng.shuffle(pool)
        epoch_loss = 0.0
        for batch in _batches(pool, config.batch_size):
            tape = T.Tape()
            out = forward_batch(params, [ex.graph for ex in batch], tape=tape,
                                training=True, rng=rng)
            loss = mse_loss(tape, out, np.array([ex.label for ex in batch]))
            if not np.isfinite(loss.item()):
                raise Diverged(f"loss {loss.item():g} at epoch {epoch}")
            T.backward(tape, loss)
            T.adam_step(leaves, [p.grad for p in leaves], state, lr=config.learning_rate)
            for p in leaves:
                p.zero_grad()
            epoch_loss += loss.item() * len(batch)
        epoch_loss /= len(pool)

        entry = {"epoch": epoch, "train_loss": epoch_loss}
        if val_examples:
            entry.update(_val_metrics(params, val_examples))
        history.append(entry)
        logger.info("epoch %d: loss=%.5f auc=%s pnr=%s", epoch, epoch_loss,
                    entry.get("auc"), entry.get("pnr"))

        # prefer validation AUC; fall back to train loss when AUC is undefined
        key = ((1, entry["auc"]) if entry.get("auc") is not None
               else (0, -epoch_loss))
        if best_arrays is None or key > best_key:
            best_key = key
            best_arrays = [p.data.copy() for p in leaves]

    for p, data in zip(leaves, best_arrays):
        p.data[...] = data
    return params, history


def run_ablation(train_examples: Sequence[LabeledExample],
                 val_examples: Sequence[LabeledExample],
                 base: TrainConfig, schema: FeatureSchema,
                 seeds: Sequence[int] = (0, 1, 2, 3, 4),
                 k_values: Sequence[int] = (1, 3, 5, 7)) -> list[dict]:
    """Architecture/readout/category grid plus a depth sweep, seed-averaged.

    Each row carries mean and standard deviation per metric over the seeds,
    plus the raw values, so orderings can be inspected without re-running.
    """
    variants: list[tuple[str, ModelConfig]] = []
    for arch in ("gat", "gin"):
        for readout in ("virtual", "mean_pool"):
            for use_category in (True, False):
                name = f"{arch}/{readout}/{'cat' if use_category else 'nocat'}"
                variants.append((name, replace(base.model, arch=arch, readout=readout,
                                               use_category=use_category)))
    for k in k_values:
        variants.append((f"depth/K={k}", replace(base.model, num_layers=k)))

    rows = []
    for name, model_config in variants:
        per_seed: dict[str, list[float]] = {"auc": [], "pnr": [], "f1": []}
        for seed in seeds:
            config = replace(base, seed=seed, model=model_config)
            params, _ = train(train_examples, val_examples, config, schema)
            metrics = _val_metrics(params, val_examples)
            for key in per_seed:
                per_seed[key].append(math.nan if metrics[key] is None else metrics[key])
        row = {"variant": name, "config": model_config.to_json(), "metrics": {}}
        for key, values in per_seed.items():
            arr = np.asarray(values)
            with np.errstate(invalid="ignore"):  # inf PNR makes std NaN; keep raw values
                row["metrics"][key] = {"mean": float(np.mean(arr)),
                                       "std": float(np.std(arr)),
                                       "values": [float(v) for v in values]}
        rows.append(row)
        logger.info("ablation %s: auc=%.4f±%.4f", name,
                    row["metrics"]["auc"]["mean"], row["metrics"]["auc"]["std"])
    return rows
