"""Differentiable primitives.

Each primitive validates shapes, computes the forward value with numpy, and
appends one entry to the active computation record.  The backward closure is
only kept when some input requires a gradient and taping is enabled, so
forward-only passes (frozen encoders, evaluation) retain no backward state.

All primitives accept and return :class:`~febench.tensor.Tensor`; integer
side inputs (token ids, class targets) are plain numpy arrays passed as
keyword attributes.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import (KernelTooLongError, ShapeMismatchError, Tensor,
                     current_record, grad_enabled)

_GELU_C = math.sqrt(2.0 / math.pi)


def _emit(kind, inputs, out_data, backward_fn):
    keep = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=keep)
    record = current_record()
    record.append(kind, inputs, out, backward_fn if keep else None)
    out._record = record
    return out


def matmul(a, b):
    """[m, k] @ [k, n] -> [m, n]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError(
            f"matmul needs 2-d operands, got {tuple(a.shape)} and {tuple(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dims differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _emit("matmul", (a, b), ad @ bd, bwd)


def add(a, b):
    """Elementwise sum; 1-d ``b`` broadcasts over leading axes as a bias."""
    if a.shape == b.shape:
        def bwd(g):
            return g, g
    elif b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.data.ndim - 1))

        def bwd(g):
            return g, g.sum(axis=lead)
    else:
        raise ShapeMismatchError(
            f"add shapes incompatible: {tuple(a.shape)} vs {tuple(b.shape)}")
    return _emit("add", (a, b), a.data + b.data, bwd)


def mul(a, b):
    """Elementwise product of same-shape tensors; either side may be scalar."""
    ad, bd = a.data, b.data
    if a.shape == b.shape:
        def bwd(g):
            return g * bd, g * ad
    elif ad.ndim == 0:
        def bwd(g):
            return (g * bd).sum(), g * ad
    elif bd.ndim == 0:
        def bwd(g):
            return g * bd, (g * ad).sum()
    else:
        raise ShapeMismatchError(
            f"mul shapes incompatible: {tuple(a.shape)} vs {tuple(b.shape)}")
    return _emit("mul", (a, b), ad * bd, bwd)


def sum_all(x):
    """Sum of every element, as a scalar."""
    shape, dtype = x.shape, x.data.dtype

    def bwd(g):
        return (np.full(shape, g, dtype=dtype),)

    return _emit("sum", (x,), x.data.sum(), bwd)


def relu(x):
    xd = x.data

    def bwd(g):
        return (g * (xd > 0),)

    return _emit("relu", (x,), np.maximum(xd, 0), bwd)


def tanh(x):
    t = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - t * t),)

    return _emit("tanh", (x,), t, bwd)


def gelu(x):
    """Gaussian error linear unit, tanh approximation."""
    xd = x.data
    u = _GELU_C * (xd + 0.044715 * xd ** 3)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def bwd(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _emit("gelu", (x,), out, bwd)


def layer_norm(x, scale, offset):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    h = x.shape[-1] if x.data.ndim else 0
    if scale.data.ndim != 1 or offset.data.ndim != 1 or scale.shape[0] != h \
            or offset.shape[0] != h:
        raise ShapeMismatchError(
            f"layer_norm over width {h} got scale {tuple(scale.shape)}, "
            f"offset {tuple(offset.shape)}")
    xd = x.data
    mean = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + 1e-12)
    xhat = (xd - mean) * inv
    out = xhat * scale.data + offset.data
    lead = tuple(range(xd.ndim - 1))
    sd = scale.data

    def bwd(g):
        gs = g * sd
        dx = inv * (gs - gs.mean(axis=-1, keepdims=True)
                    - xhat * (gs * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit("layer_norm", (x, scale, offset), out, bwd)


def conv1d_valid(x, w, b):
    """Valid-mode 1-d convolution over the time axis.

    ``x`` is [T, H], ``w`` is [k, H, f], ``b`` is [f]; output is
    [T - k + 1, f].  A kernel longer than the sequence is an error.
    """
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeMismatchError(
            f"conv1d_valid needs x [T, H] and w [k, H, f], got "
            f"{tuple(x.shape)} and {tuple(w.shape)}")
    t_len, h = x.shape
    k, wh, f = w.shape
    if wh != h:
        raise ShapeMismatchError(
            f"conv1d_valid width mismatch: input {h}, kernel {wh}")
    if b.data.ndim != 1 or b.shape[0] != f:
        raise ShapeMismatchError(
            f"conv1d_valid bias {tuple(b.shape)} does not match {f} filters")
    if t_len < k:
        raise KernelTooLongError(
            f"kernel size {k} exceeds sequence length {t_len}")
    n = t_len - k + 1
    cols = sliding_window_view(x.data, k, axis=0).transpose(0, 2, 1).reshape(n, k * h)
    w2 = w.data.reshape(k * h, f)
    out = cols @ w2 + b.data

    def bwd(g):
        gw = (cols.T @ g).reshape(k, h, f)
        gb = g.sum(axis=0)
        dcols = (g @ w2.T).reshape(n, k, h)
        dx = np.zeros((t_len, h), dtype=g.dtype)
        for i in range(k):
            dx[i:i + n] += dcols[:, i, :]
        return dx, gw, gb

    return _emit("conv1d_valid", (x, w, b), out, bwd)


def max_over_time(x, limit=None):
    """Columnwise max over the first ``limit`` rows of [T, F] (all rows if None)."""
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"max_over_time needs [T, F], got {tuple(x.shape)}")
    t_len, f = x.shape
    limit = t_len if limit is None else int(limit)
    if not 1 <= limit <= t_len:
        raise ShapeMismatchError(
            f"max_over_time limit {limit} outside 1..{t_len}")
    sub = x.data[:limit]
    idx = sub.argmax(axis=0)
    cols = np.arange(f)
    out = sub[idx, cols]

    def bwd(g):
        dx = np.zeros((t_len, f), dtype=g.dtype)
        dx[idx, cols] = g
        return (dx,)

    return _emit("max_over_time", (x,), out, bwd)


def embedding_lookup(table, ids):
    """Gather rows of [V, H] by an integer id array."""
    if table.data.ndim != 2:
        raise ShapeMismatchError(
            f"embedding_lookup table must be [V, H], got {tuple(table.shape)}")
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError(f"ids must be integers, got dtype {ids.dtype}")
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexError(f"id out of range for table with {v} rows")
    shape, dtype = table.shape, table.data.dtype

    def bwd(g):
        gt = np.zeros(shape, dtype=dtype)
        np.add.at(gt, ids, g)
        return (gt,)

    return _emit("embedding_lookup", (table,), table.data[ids], bwd)


def scaled_dot_attention(q, k, v, num_heads, valid_length=None):
    """Multi-head scaled dot-product self-attention over one sequence.

    ``q``, ``k``, ``v`` are [T, H] with H divisible by ``num_heads``.  Keys
    at positions >= ``valid_length`` are masked out of every query's softmax.
    """
    if not (q.shape == k.shape == v.shape) or q.data.ndim != 2:
        raise ShapeMismatchError(
            f"attention needs matching [T, H] inputs, got {tuple(q.shape)}, "
            f"{tuple(k.shape)}, {tuple(v.shape)}")
    t_len, h = q.shape
    if num_heads < 1 or h % num_heads != 0:
        raise ShapeMismatchError(
            f"width {h} not divisible into {num_heads} heads")
    if valid_length is not None and not 1 <= int(valid_length) <= t_len:
        raise ShapeMismatchError(
            f"valid_length {valid_length} outside 1..{t_len}")
    d = h // num_heads
    inv_scale = 1.0 / math.sqrt(d)

    def split(t):
        return t.data.reshape(t_len, num_heads, d).transpose(1, 0, 2)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(0, 2, 1) * inv_scale
    if valid_length is not None and valid_length < t_len:
        scores[:, :, int(valid_length):] = -1e30
    scores -= scores.max(axis=-1, keepdims=True)
    wts = np.exp(scores)
    wts /= wts.sum(axis=-1, keepdims=True)
    out = (wts @ vh).transpose(1, 0, 2).reshape(t_len, h)

    def bwd(g):
        gh = g.reshape(t_len, num_heads, d).transpose(1, 0, 2)
        dv = wts.transpose(0, 2, 1) @ gh
        dwts = gh @ vh.transpose(0, 2, 1)
        ds = wts * (dwts - (dwts * wts).sum(axis=-1, keepdims=True)) * inv_scale
        dq = ds @ kh
        dk = ds.transpose(0, 2, 1) @ qh

        def merge(t):
            return t.transpose(1, 0, 2).reshape(t_len, h)

        return merge(dq), merge(dk), merge(dv)

    return _emit("scaled_dot_attention", (q, k, v), out, bwd)


def concat(parts):
    """Join tensors along axis 0."""
    parts = tuple(parts)
    if not parts:
        raise ShapeMismatchError("concat of zero tensors")
    trail = parts[0].shape[1:]
    for p in parts:
        if p.data.ndim != parts[0].data.ndim or p.shape[1:] != trail:
            raise ShapeMismatchError(
                f"concat trailing dims differ: {[tuple(p.shape) for p in parts]}")
    sizes = [p.shape[0] if p.data.ndim else 1 for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=0))

    return _emit("concat", parts, np.concatenate([p.data for p in parts], axis=0), bwd)


def stack(parts):
    """Stack same-shape tensors into a new leading axis."""
    parts = tuple(parts)
    if not parts:
        raise ShapeMismatchError("stack of zero tensors")
    shape = parts[0].shape
    for p in parts:
        if p.shape != shape:
            raise ShapeMismatchError(
                f"stack shapes differ: {[tuple(p.shape) for p in parts]}")

    def bwd(g):
        return tuple(g[i] for i in range(len(parts)))

    return _emit("stack", parts, np.stack([p.data for p in parts]), bwd)


def linear(x, w, b):
    """Affine map ``x @ w + b`` for [in] or [B, in] inputs, w [in, out]."""
    if w.data.ndim != 2:
        raise ShapeMismatchError(f"linear weight must be [in, out], got {tuple(w.shape)}")
    n_in, n_out = w.shape
    if x.data.ndim not in (1, 2) or x.shape[-1] != n_in:
        raise ShapeMismatchError(
            f"linear input {tuple(x.shape)} does not match weight {tuple(w.shape)}")
    if b.data.ndim != 1 or b.shape[0] != n_out:
        raise ShapeMismatchError(
            f"linear bias {tuple(b.shape)} does not match {n_out} outputs")
    xd, wd = x.data, w.data
    if xd.ndim == 1:
        def bwd(g):
            return wd @ g, np.outer(xd, g), g
    else:
        def bwd(g):
            return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _emit("linear", (x, w, b), xd @ wd + b.data, bwd)


def softmax_xent(logits, targets):
    """Mean cross-entropy of a [B, C] logit batch against integer targets."""
    if logits.data.ndim != 2:
        raise ShapeMismatchError(
            f"softmax_xent needs [B, C] logits, got {tuple(logits.shape)}")
    n, c = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ShapeMismatchError(
            f"softmax_xent targets {tuple(targets.shape)} for batch {n}")
    if targets.dtype.kind not in "iu":
        raise TypeError(f"targets must be integers, got dtype {targets.dtype}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise IndexError(f"target class out of range 0..{c - 1}")
    ld = logits.data
    shifted = ld - ld.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    total = expv.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    logp = shifted[rows, targets] - np.log(total[:, 0])
    loss = -logp.mean()

    def bwd(g):
        p = expv / total
        p[rows, targets] -= 1.0
        return (p * (g / n),)

    return _emit("softmax_xent", (logits,), loss, bwd)


def sigmoid_bce(logits, targets):
    """Mean elementwise binary cross-entropy on logits against 0/1 targets."""
    targets = np.asarray(targets, dtype=logits.data.dtype)
    if targets.shape != logits.shape:
        raise ShapeMismatchError(
            f"sigmoid_bce targets {tuple(targets.shape)} vs logits {tuple(logits.shape)}")
    ld = logits.data
    loss = (np.maximum(ld, 0) - ld * targets + np.log1p(np.exp(-np.abs(ld)))).mean()
    size = ld.size

    def bwd(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * ld))
        return ((sig - targets) * (g / size),)

    return _emit("sigmoid_bce", (logits,), loss, bwd)


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "sum": sum_all,
    "relu": relu,
    "tanh": tanh,
    "gelu": gelu,
    "layer_norm": layer_norm,
    "conv1d_valid": conv1d_valid,
    "max_over_time": max_over_time,
    "embedding_lookup": embedding_lookup,
    "scaled_dot_attention": scaled_dot_attention,
    "concat": concat,
    "stack": stack,
    "linear": linear,
    "softmax_xent": softmax_xent,
    "sigmoid_bce": sigmoid_bce,
}


def apply_primitive(kind, inputs, **attrs):
    """Dispatch by kind name; ``inputs`` is a sequence of tensors."""
    fn = PRIMITIVES.get(kind)
    if fn is None:
        raise ValueError(f"unknown primitive {kind!r}; known: {sorted(PRIMITIVES)}")
    if kind in ("concat", "stack"):
        return fn(tuple(inputs), **attrs)
    return fn(*inputs, **attrs)
