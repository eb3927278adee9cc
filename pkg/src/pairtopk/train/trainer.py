"""Mini-batch AdamW training, evaluation, prediction and top-K sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from pairtopk.corpus.window import Instance
from pairtopk.evidence.records import EvidenceRecord, records_from_traces
from pairtopk.errors import ConfigError, NumericError, TrainingError
from pairtopk.model.network import ForwardTrace, PairTopKModel
from pairtopk.tensor import OptimizerState, adamw_step
from pairtopk.train.metrics import Metrics, compute_metrics

log = logging.getLogger(__name__)

EVAL_BATCH = 256


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    eval_every: int = 1
    weight_decay: float = 0.01
    excluded_labels: tuple[str, ...] = ()

    def validate(self) -> "TrainConfig":
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1 or self.eval_every < 1:
            raise ConfigError("learning_rate >= 0, batch_size >= 1, epochs >= 1 and eval_every >= 1 required")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["excluded_labels"] = ",".join(self.excluded_labels)
        return d

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        kinds = {f.name for f in fields(cls)}
        kwargs = {}
        for k, v in values.items():
            if k not in kinds:
                raise ConfigError(f"unknown training config key {k!r}")
            if k == "excluded_labels":
                kwargs[k] = tuple(x for x in (v.split(",") if isinstance(v, str) else v) if x)
            elif k in ("learning_rate", "weight_decay"):
                kwargs[k] = float(v)
            else:
                kwargs[k] = int(v)
        return cls(**kwargs).validate()


@dataclass
class TrainResult:
    curve: list[tuple[int, float, float]] = field(default_factory=list)  # epoch, train_loss, val_f1
    best_epoch: int = 0
    best_f1: float = -1.0
    steps: int = 0


def _batches(instances: list[Instance], size: int, order: np.ndarray):
    for start in range(0, len(order), size):
        yield [instances[i] for i in order[start:start + size]]


def predict_labels(model: PairTopKModel, instances: list[Instance], top_k: int | None = None,
                   keep_traces: bool = False) -> tuple[np.ndarray, list[ForwardTrace]]:
    """Argmax of fused probabilities (ties to the lowest label id), eval mode."""
    model.check_instances(instances)
    preds: list[np.ndarray] = []
    traces: list[ForwardTrace] = []
    for start in range(0, len(instances), EVAL_BATCH):
        chunk = instances[start:start + EVAL_BATCH]
        out = model.forward_batch(chunk, training=False, traces=keep_traces, top_k=top_k)
        preds.append(np.argmax(out.probabilities, axis=-1))
        traces.extend(out.traces)
    return (np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)), traces


def predict(model: PairTopKModel, instances: list[Instance], label_names,
            top_k: int | None = None) -> tuple[np.ndarray, list[EvidenceRecord]]:
    """Labels plus one evidence record per (instance, query role)."""
    k = top_k or model.config.top_k
    pred, traces = predict_labels(model, instances, top_k=k, keep_traces=True)
    return pred, records_from_traces(instances, traces, pred, label_names, k)


def evaluate(model: PairTopKModel, instances: list[Instance], excluded_ids=(), top_k: int | None = None) -> Metrics:
    pred, _ = predict_labels(model, instances, top_k=top_k)
    gold = np.asarray([i.label for i in instances], dtype=np.int64)
    return compute_metrics(gold, pred, model.config.n_labels, excluded_ids)


def train(model: PairTopKModel, train_set: list[Instance], config: TrainConfig,
          validation: list[Instance] | None = None, excluded_ids=(), top_k: int | None = None) -> TrainResult:
    """Train in place; the best-validation parameters are loaded back at the end."""
    config.validate()
    if not train_set:
        raise TrainingError("training split is empty")
    model.check_instances(train_set)
    rng = np.random.default_rng(config.seed)
    state = OptimizerState(lr=config.learning_rate, weight_decay=config.weight_decay)
    size = min(config.batch_size, len(train_set))
    result = TrainResult()
    best = model.params.snapshot()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        total, count = 0.0, 0
        for batch in _batches(train_set, size, order):
            where = f"epoch {epoch}, step {state.step + 1}"
            try:
                loss = model.loss(batch, training=True, top_k=top_k)
            except NumericError as exc:
                raise TrainingError(f"diverged at {where}: {exc}") from exc
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at {where}")
            loss.backward()
            adamw_step(model.params, state)
            total += value * len(batch)
            count += len(batch)
        train_loss = total / count
        val_f1 = float("nan")
        if validation and epoch % config.eval_every == 0:
            val_f1 = evaluate(model, validation, excluded_ids, top_k=top_k).micro_f1
            if val_f1 > result.best_f1:
                result.best_f1, result.best_epoch = val_f1, epoch
                best = model.params.snapshot()
        elif not validation:
            result.best_epoch = epoch
            best = model.params.snapshot()
        result.curve.append((epoch, train_loss, val_f1))
        log.info("epoch %d loss %.4f val_f1 %.4f", epoch, train_loss, val_f1)
    result.steps = state.step
    model.params.load(best)
    return result


def sweep_k(model_factory: Callable[[int], PairTopKModel], train_set: list[Instance],
            test_set: list[Instance], k_values, config: TrainConfig,
            validation: list[Instance] | None = None, excluded_ids=(),
            on_model: Callable[[int, PairTopKModel], None] | None = None) -> list[dict]:
    """Train and evaluate one model per K under identical seed and data order."""
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise ConfigError("k_values must not be empty")
    if len(set(k_values)) != len(k_values):
        raise ConfigError(f"duplicate K values in {k_values}")
    if min(k_values) < 1:
        raise ConfigError("every K must be >= 1")
    rows = []
    for k in k_values:
        model = model_factory(k)
        train(model, train_set, config, validation, excluded_ids)
        m = evaluate(model, test_set, excluded_ids)
        rows.append({"k": k, "precision": m.precision, "recall": m.recall, "micro_f1": m.micro_f1})
        if on_model is not None:
            on_model(k, model)
    return rows
