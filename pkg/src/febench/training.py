"""Training loops: loss, Adam, seeded epochs, and multi-run aggregation.

A run owns one memory ledger and one timing trace.  Parameters are
registered up front; per-batch activations and gradients are released after
each optimizer step, so the ledger peak reflects the training-step
high-water mark.  Everything downstream of the seed is deterministic:
weight init, shuffles, and batch order depend only on (seed, epoch).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ops
from .metrics import accuracy, mean_std, micro_prf
from .cnn import predict
from .profiling import MemoryLedger, Stopwatch, TimingTrace, ledger_scope
from .tensor import ComputationRecord, ShapeMismatchError, backward, no_grad
from .text import encode

# (FE epochs, FiT epochs) per corpus, as configured for the full-scale grid
EPOCH_DEFAULTS = {
    "AGNews": (20, 10),
    "20NEWS": (300, 100),
    "DBpedia": (10, 10),
    "TREC-6": (150, 50),
    "TREC-50": (150, 50),
    "YELP": (15, 5),
    "RCV1": (50, 20),
    "BGC_EN": (40, 20),
    "Ohsumed": (300, 80),
}

DEFAULT_BATCH = {"FE": 50, "FiT": 40}


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch and batch where it happened."""

    def __init__(self, epoch, batch, value):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def default_epochs(dataset_name, mode):
    """Configured epoch count for a known corpus name, else None."""
    pair = EPOCH_DEFAULTS.get(dataset_name)
    if pair is None:
        return None
    return pair[0] if mode == "FE" else pair[1]


@dataclass(frozen=True)
class RunConfig:
    mode: str
    epochs: int
    batch_size: int = None
    learning_rate: float = 5e-5
    seed: int = 0
    threshold: float = 0.5
    max_len: int = 200

    def __post_init__(self):
        if self.mode not in ("FE", "FiT"):
            raise ValueError(f"mode must be FE or FiT, got {self.mode!r}")
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", DEFAULT_BATCH[self.mode])
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def compute_loss(logits, targets, task_kind):
    """Scalar loss Tensor for a [B, C] logit batch."""
    if task_kind == "single_label":
        return ops.softmax_xent(logits, targets=targets)
    if task_kind == "multi_label":
        return ops.sigmoid_bce(logits, targets=targets)
    raise ValueError(f"unknown task_kind {task_kind!r}")


@dataclass
class AdamState:
    """Shared step counter with lazily created per-parameter moments.

    Parameters that never appear in a gradient map (frozen ones) never get
    moment arrays, so they contribute nothing to optimizer-state memory.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    ledger: MemoryLedger = None

    def moments_for(self, param):
        slot = self.m.get(param.tid)
        if slot is None:
            slot = np.zeros_like(param.data)
            self.m[param.tid] = slot
            self.v[param.tid] = np.zeros_like(param.data)
            if self.ledger is not None:
                self.ledger.record_alloc("optimizer_state", 2 * slot.nbytes,
                                         group=param.group)
        return slot, self.v[param.tid]

    def state_bytes(self):
        return sum(2 * arr.nbytes for arr in self.m.values())


def adam_step(params, grad_map, state, lr):
    """Bias-corrected Adam update for every parameter present in the map."""
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    for param in params:
        grad = grad_map.get(param.tid)
        if grad is None:
            continue
        if grad.shape != param.data.shape:
            raise ShapeMismatchError(
                f"gradient shape {grad.shape} vs parameter {param.data.shape}")
        m, v = state.moments_for(param)
        m += (1.0 - state.beta1) * (grad - m)
        v += (1.0 - state.beta2) * (grad * grad - v)
        m_hat = m / correct1
        v_hat = v / correct2
        param.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def encode_examples(examples, vocab, max_len, label_space, task_kind):
    """Fixed-length id matrix, valid lengths, and targets for an example list."""
    n = len(examples)
    ids = np.zeros((n, max_len), dtype=np.int64)
    valid = np.zeros(n, dtype=np.int64)
    index = {label: i for i, label in enumerate(label_space)}
    if task_kind == "single_label":
        targets = np.zeros(n, dtype=np.int64)
    else:
        targets = np.zeros((n, len(label_space)), dtype=np.float32)
    for i, ex in enumerate(examples):
        ids[i], valid[i] = encode(ex.text, vocab, max_len=max_len)
        if task_kind == "single_label":
            targets[i] = index[next(iter(ex.labels))]
        else:
            for label in ex.labels:
                targets[i, index[label]] = 1.0
    return ids, valid, targets


def forward_batch(encoder, head, ids_batch, valid_batch):
    """Logit matrix [B, C] by running each document through encoder + head."""
    rows = [head.forward(encoder.forward(ids, int(valid)), int(valid))
            for ids, valid in zip(ids_batch, valid_batch)]
    return ops.stack(rows)


def train_step(encoder, head, params, state, ids_batch, valid_batch, targets,
               task_kind, lr):
    """One forward/backward/update cycle; returns the batch loss as a float."""
    with ComputationRecord() as record:
        logits = forward_batch(encoder, head, ids_batch, valid_batch)
        loss = compute_loss(logits, targets, task_kind)
        value = float(loss.data)
        if np.isfinite(value):
            grads = backward(loss)
            adam_step(params, grads, state, lr)
        record.release()
    return value


def evaluate(encoder, head, ids, valid, task_kind, threshold=0.5):
    """Predicted label-index sets for an encoded test split."""
    predictions = []
    with no_grad():
        for doc_ids, doc_valid in zip(ids, valid):
            with ComputationRecord() as record:
                logits = head.forward(encoder.forward(doc_ids, int(doc_valid)),
                                      int(doc_valid))
                predictions.append(predict(logits, task_kind, threshold))
                record.release()
    return predictions


def _gold_sets(targets, task_kind):
    if task_kind == "single_label":
        return [{int(t)} for t in targets]
    return [set(np.flatnonzero(row).tolist()) for row in targets]


def _metrics(pred_sets, gold_sets, task_kind):
    if task_kind == "single_label":
        return {"accuracy": accuracy(pred_sets, gold_sets)}
    p, r, f1 = micro_prf(pred_sets, gold_sets)
    return {"precision": p, "recall": r, "f1": f1}


@dataclass
class RunResult:
    mode: str
    seed: int
    train_losses: list
    epoch_metrics: list
    final_metrics: dict
    timing: TimingTrace
    peak_bytes: int
    ledger: MemoryLedger

    def __post_init__(self):
        self.timing.check()


def train(config, dataset, encoder, head, vocab):
    """Run FE or FiT training; returns a RunResult with metrics/time/memory."""
    if not dataset.train or not dataset.test:
        raise ValueError("dataset needs non-empty train and test splits")
    total_watch = Stopwatch()
    encoder.set_trainable(config.mode == "FiT")
    all_params = list(encoder.weights.tensors.values()) + \
        list(head.weights.tensors.values())
    trainable = [p for p in all_params if p.requires_grad]

    train_ids, train_valid, train_targets = encode_examples(
        dataset.train, vocab, config.max_len, dataset.label_space,
        dataset.task_kind)
    test_ids, test_valid, test_targets = encode_examples(
        dataset.test, vocab, config.max_len, dataset.label_space,
        dataset.task_kind)
    gold = _gold_sets(test_targets, dataset.task_kind)

    ledger = MemoryLedger()
    for param in all_params:
        ledger.record_alloc("parameters", param.data.nbytes, group=param.group)
    state = AdamState(ledger=ledger)

    n = len(dataset.train)
    train_losses, epoch_metrics, epoch_seconds = [], [], []
    with ledger_scope(ledger):
        for epoch in range(config.epochs):
            watch = Stopwatch()
            order = np.random.default_rng(
                [config.seed, 2, epoch]).permutation(n)
            batch_losses = []
            for batch_index, start in enumerate(range(0, n, config.batch_size)):
                chosen = order[start:start + config.batch_size]
                value = train_step(
                    encoder, head, trainable, state, train_ids[chosen],
                    train_valid[chosen], train_targets[chosen],
                    dataset.task_kind, config.learning_rate)
                if not np.isfinite(value):
                    raise TrainingDivergedError(epoch, batch_index, value)
                batch_losses.append(value)
            predictions = evaluate(encoder, head, test_ids, test_valid,
                                   dataset.task_kind, config.threshold)
            train_losses.append(float(np.mean(batch_losses)))
            epoch_metrics.append(_metrics(predictions, gold, dataset.task_kind))
            epoch_seconds.append(watch.elapsed())

    timing = TimingTrace(epoch_seconds=epoch_seconds,
                         total_seconds=total_watch.elapsed())
    return RunResult(mode=config.mode, seed=config.seed,
                     train_losses=train_losses, epoch_metrics=epoch_metrics,
                     final_metrics=dict(epoch_metrics[-1]), timing=timing,
                     peak_bytes=ledger.peak(), ledger=ledger)


@dataclass
class AggregateResult:
    """Mean and population std of final metrics across repeated seeded runs."""

    runs: list
    seeds: list
    metrics_mean: dict
    metrics_std: dict
    epoch_seconds: list
    total_seconds: float
    peak_bytes: float

    @property
    def repeats(self):
        return len(self.runs)


def aggregate_runs(runs, seeds):
    """Collapse RunResults into mean/std metrics and averaged time/memory."""
    names = sorted(runs[0].final_metrics)
    metrics_mean, metrics_std = {}, {}
    for name in names:
        mean, std = mean_std([r.final_metrics[name] for r in runs])
        metrics_mean[name] = mean
        metrics_std[name] = std
    per_epoch = np.array([r.timing.epoch_seconds for r in runs], dtype=np.float64)
    return AggregateResult(
        runs=list(runs), seeds=list(seeds),
        metrics_mean=metrics_mean, metrics_std=metrics_std,
        epoch_seconds=per_epoch.mean(axis=0).tolist(),
        total_seconds=float(np.mean([r.timing.total_seconds for r in runs])),
        peak_bytes=float(np.mean([r.peak_bytes for r in runs])))


def run_experiment(config, dataset, make_model, repeats=3):
    """Repeat train() with derived seeds (config.seed + run index) and aggregate.

    ``make_model(seed)`` must return a fresh (encoder, head, vocab) triple so
    repeats never share mutable weights.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    runs, seeds = [], []
    for index in range(repeats):
        run_seed = config.seed + index
        encoder, head, vocab = make_model(run_seed)
        runs.append(train(replace(config, seed=run_seed), dataset, encoder,
                          head, vocab))
        seeds.append(run_seed)
    return aggregate_runs(runs, seeds)
