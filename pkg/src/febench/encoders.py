"""Encoders: static embedding table or transformer, with a freeze switch.

Both kinds map a fixed-length token id sequence to a hidden-state sequence
[max_len x H].  The transformer follows the residual-then-normalize block
layout (attention, add, layer norm; feed-forward, add, layer norm) on top of
token + position embeddings with an embedding layer norm.  Freezing clears
``requires_grad`` on every encoder tensor, which keeps the whole encoder out
of the gradient map and therefore out of gradient/optimizer memory.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .serialization import load_tensor_map, save_tensor_map
from .tensor import ShapeMismatchError, Tensor


class WeightMismatchError(ValueError):
    """Weight names/shapes do not match what the config requires."""


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    hidden: int
    vocab_size: int
    layers: int = 0
    heads: int = 1
    ff_size: int = None
    max_positions: int = 200
    frozen: bool = False

    def __post_init__(self):
        if self.kind not in ("static", "transformer"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.hidden < 1 or self.vocab_size < 1:
            raise ValueError("hidden and vocab_size must be positive")
        if self.kind == "transformer":
            if self.layers < 0 or self.heads < 1 or self.max_positions < 1:
                raise ValueError("layers, heads, max_positions must be valid")
            if self.hidden % self.heads != 0:
                raise ValueError(
                    f"hidden {self.hidden} not divisible by {self.heads} heads")
            if self.ff_size is None:
                object.__setattr__(self, "ff_size", 4 * self.hidden)
            if self.ff_size < 1:
                raise ValueError("ff_size must be positive")


def expected_shapes(config):
    """Required tensor names and shapes for a config, in a stable order."""
    h = config.hidden
    shapes = {"token_embedding": (config.vocab_size, h)}
    if config.kind == "static":
        return shapes
    shapes["position_embedding"] = (config.max_positions, h)
    shapes["embedding_norm.scale"] = (h,)
    shapes["embedding_norm.offset"] = (h,)
    f = config.ff_size
    for i in range(config.layers):
        p = f"layer{i}"
        # attention projections are pure matrices: a key-projection bias is
        # cancelled by the softmax row shift, so none of the four carry one
        for proj in ("query", "key", "value", "output"):
            shapes[f"{p}.attention.{proj}.weight"] = (h, h)
        shapes[f"{p}.attention_norm.scale"] = (h,)
        shapes[f"{p}.attention_norm.offset"] = (h,)
        shapes[f"{p}.ff.grow.weight"] = (h, f)
        shapes[f"{p}.ff.grow.bias"] = (f,)
        shapes[f"{p}.ff.shrink.weight"] = (f, h)
        shapes[f"{p}.ff.shrink.bias"] = (h,)
        shapes[f"{p}.ff_norm.scale"] = (h,)
        shapes[f"{p}.ff_norm.offset"] = (h,)
    return shapes


def param_count(config):
    """Exact number of scalar parameters the config requires."""
    return sum(int(np.prod(s)) for s in expected_shapes(config).values())


@dataclass
class EncoderWeights:
    """Named encoder tensors, validated against their config."""

    config: EncoderConfig
    tensors: dict

    def __post_init__(self):
        self.validate()

    def validate(self):
        wanted = expected_shapes(self.config)
        names, have = set(wanted), set(self.tensors)
        if names != have:
            missing, extras = sorted(names - have), sorted(have - names)
            raise WeightMismatchError(
                f"weight names mismatch: missing {missing}, unexpected {extras}")
        for name, shape in wanted.items():
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise WeightMismatchError(
                    f"{name}: expected shape {shape}, got {got}")

    @classmethod
    def from_arrays(cls, config, arrays, trainable=None):
        if trainable is None:
            trainable = not config.frozen
        tensors = {name: Tensor(np.asarray(arr, dtype=np.float32),
                                requires_grad=trainable,
                                category="parameters", group="encoder")
                   for name, arr in arrays.items()}
        return cls(config=config, tensors=tensors)

    def set_trainable(self, trainable):
        for t in self.tensors.values():
            t.requires_grad = bool(trainable)

    def to_arrays(self):
        return {name: t.data for name, t in self.tensors.items()}

    def byte_image(self):
        """Concatenated raw bytes of every tensor, for bit-identity checks."""
        return b"".join(self.tensors[n].data.tobytes() for n in sorted(self.tensors))


def init_weights(config, seed):
    """Seeded random weights: matrices normal(0, 0.02), norm scales 1, biases 0."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith("norm.scale"):
            arrays[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith((".bias", "norm.offset")):
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:
            arrays[name] = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
    return EncoderWeights.from_arrays(config, arrays)


def encoder_forward(config, weights, token_ids, valid_length):
    """Hidden sequence [len(token_ids) x H] for one encoded document."""
    token_ids = np.asarray(token_ids)
    t_len = token_ids.shape[0]
    tensors = weights.tensors
    hidden = ops.embedding_lookup(tensors["token_embedding"], ids=token_ids)
    if config.kind == "static":
        return hidden
    if t_len > config.max_positions:
        raise ShapeMismatchError(
            f"sequence length {t_len} exceeds {config.max_positions} positions")
    positions = ops.embedding_lookup(tensors["position_embedding"],
                                     ids=np.arange(t_len))
    x = ops.layer_norm(ops.add(hidden, positions),
                       tensors["embedding_norm.scale"],
                       tensors["embedding_norm.offset"])
    for i in range(config.layers):
        p = f"layer{i}"

        def proj(name, inp):
            return ops.matmul(inp, tensors[f"{p}.attention.{name}.weight"])

        attn = ops.scaled_dot_attention(
            proj("query", x), proj("key", x), proj("value", x),
            num_heads=config.heads, valid_length=valid_length)
        x = ops.layer_norm(ops.add(x, proj("output", attn)),
                           tensors[f"{p}.attention_norm.scale"],
                           tensors[f"{p}.attention_norm.offset"])
        grown = ops.gelu(ops.linear(x, tensors[f"{p}.ff.grow.weight"],
                                    tensors[f"{p}.ff.grow.bias"]))
        shrunk = ops.linear(grown, tensors[f"{p}.ff.shrink.weight"],
                            tensors[f"{p}.ff.shrink.bias"])
        x = ops.layer_norm(ops.add(x, shrunk),
                           tensors[f"{p}.ff_norm.scale"],
                           tensors[f"{p}.ff_norm.offset"])
    return x


PRESETS = {
    "static": dict(kind="static", hidden=128),
    "tiny": dict(kind="transformer", hidden=128, layers=2, heads=2),
    "L-2": dict(kind="transformer", hidden=768, layers=2, heads=12),
    "L-12": dict(kind="transformer", hidden=128, layers=12, heads=2),
    "base": dict(kind="transformer", hidden=768, layers=12, heads=12),
}


def preset_config(name, vocab_size, frozen=False, max_positions=200):
    """Config for one of the named grid presets."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    base = dict(PRESETS[name])
    if base["kind"] == "static":
        base.pop("max_positions", None)
        return EncoderConfig(vocab_size=vocab_size, frozen=frozen, **base)
    return EncoderConfig(vocab_size=vocab_size, frozen=frozen,
                         max_positions=max_positions, **base)


@dataclass
class Encoder:
    """Config + weights bundle with the freeze switch."""

    config: EncoderConfig
    weights: EncoderWeights

    @classmethod
    def build(cls, config, seed):
        return cls(config=config, weights=init_weights(config, seed))

    @classmethod
    def from_preset(cls, name, vocab_size, seed, frozen=False):
        return cls.build(preset_config(name, vocab_size, frozen=frozen), seed)

    @classmethod
    def from_embedding_table(cls, table, frozen=False):
        """Wrap a loaded static embedding table as an encoder."""
        config = EncoderConfig(kind="static", hidden=table.dimension,
                               vocab_size=table.vocab.size, frozen=frozen)
        return cls(config=config, weights=EncoderWeights.from_arrays(
            config, {"token_embedding": table.matrix}))

    @property
    def frozen(self):
        return not next(iter(self.weights.tensors.values())).requires_grad

    def set_trainable(self, trainable):
        self.weights.set_trainable(trainable)
        self.config = replace(self.config, frozen=not trainable)

    def forward(self, token_ids, valid_length):
        return encoder_forward(self.config, self.weights, token_ids, valid_length)

    @property
    def param_count(self):
        return param_count(self.config)


def save_weights(weights, path):
    """Write encoder weights to a weight file."""
    return save_tensor_map(weights.to_arrays(), path)


def load_weights(path, config=None):
    """Read a weight file; with a config, returns validated EncoderWeights."""
    arrays = load_tensor_map(path)
    if config is None:
        return arrays
    return EncoderWeights.from_arrays(config, arrays)
