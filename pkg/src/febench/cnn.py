"""Convolutional classification head over a hidden-state sequence.

Parallel 1-d convolutions of several kernel sizes, ReLU, max-over-time
pooling restricted to windows that lie fully inside the valid (non-PAD)
prefix, concatenation, and an affine projection to class logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ShapeMismatchError, Tensor


@dataclass(frozen=True)
class CnnHeadConfig:
    hidden: int
    classes: int
    kernel_sizes: tuple = (3, 4, 5, 6)
    filters: int = 100

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(self.kernel_sizes))
        if not self.kernel_sizes or any(k < 1 for k in self.kernel_sizes):
            raise ValueError("kernel sizes must be positive integers")
        if len(set(self.kernel_sizes)) != len(self.kernel_sizes):
            raise ValueError("kernel sizes must be distinct")
        if self.filters < 1:
            raise ValueError("filter count must be positive")
        if self.hidden < 1 or self.classes < 1:
            raise ValueError("hidden width and class count must be positive")


def feature_dim(config):
    """Pooled feature length: kernel count x filters."""
    return len(config.kernel_sizes) * config.filters


@dataclass
class CnnHeadWeights:
    """Per-kernel conv weight/bias plus the projection to class logits."""

    config: CnnHeadConfig
    tensors: dict

    def __post_init__(self):
        self.validate()

    def validate(self):
        wanted = expected_shapes(self.config)
        names, have = set(wanted), set(self.tensors)
        if names != have:
            raise ShapeMismatchError(
                f"head weight names mismatch: missing {sorted(names - have)}, "
                f"unexpected {sorted(have - names)}")
        for name, shape in wanted.items():
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise ShapeMismatchError(f"{name}: expected {shape}, got {got}")

    @classmethod
    def from_arrays(cls, config, arrays, trainable=True):
        tensors = {name: Tensor(np.asarray(arr, dtype=np.float32),
                                requires_grad=trainable,
                                category="parameters", group="head")
                   for name, arr in arrays.items()}
        return cls(config=config, tensors=tensors)

    def to_arrays(self):
        return {name: t.data for name, t in self.tensors.items()}


def expected_shapes(config):
    shapes = {}
    for k in config.kernel_sizes:
        shapes[f"conv{k}.weight"] = (k, config.hidden, config.filters)
        shapes[f"conv{k}.bias"] = (config.filters,)
    shapes["projection.weight"] = (feature_dim(config), config.classes)
    shapes["projection.bias"] = (config.classes,)
    return shapes


def init_weights(config, seed):
    """Seeded normal(0, 0.02) matrices, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:
            arrays[name] = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
    return CnnHeadWeights.from_arrays(config, arrays)


def cnn_forward(config, weights, hidden, valid_length):
    """Logits [classes] for one document's hidden sequence [max_len x H].

    Convolution windows that start past ``valid_length - k`` would overlap
    padding rows, so pooling only sees the first ``valid_length - k + 1``
    windows.  valid_length must cover the largest kernel.
    """
    t_len = hidden.shape[0]
    max_k = max(config.kernel_sizes)
    if valid_length < max_k:
        raise ShapeMismatchError(
            f"valid_length {valid_length} shorter than largest kernel {max_k}")
    if valid_length > t_len:
        raise ShapeMismatchError(
            f"valid_length {valid_length} exceeds sequence length {t_len}")
    tensors = weights.tensors
    pooled = []
    for k in config.kernel_sizes:
        conv = ops.conv1d_valid(hidden, tensors[f"conv{k}.weight"],
                                tensors[f"conv{k}.bias"])
        active = ops.relu(conv)
        pooled.append(ops.max_over_time(active, limit=valid_length - k + 1))
    features = ops.concat(pooled)
    return ops.linear(features, tensors["projection.weight"],
                      tensors["projection.bias"])


def predict(logits, task_kind, threshold=0.5):
    """Predicted label-index set from a logit vector.

    Single-label: singleton argmax (first index on ties).  Multi-label:
    indices whose sigmoid reaches the threshold; may be empty.
    """
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if task_kind == "single_label":
        return {int(np.argmax(values))}
    if task_kind == "multi_label":
        if not 0.0 < threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        sig = 0.5 * (1.0 + np.tanh(0.5 * values))
        return {int(i) for i in np.flatnonzero(sig >= threshold)}
    raise ValueError(f"unknown task_kind {task_kind!r}")


@dataclass
class CnnHead:
    """Config + weights bundle for the classification head."""

    config: CnnHeadConfig
    weights: CnnHeadWeights

    @classmethod
    def build(cls, config, seed):
        return cls(config=config, weights=init_weights(config, seed))

    def forward(self, hidden, valid_length):
        return cnn_forward(self.config, self.weights, hidden, valid_length)
