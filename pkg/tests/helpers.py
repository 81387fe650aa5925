"""Shared builders for gradient-check sweeps.

Each case maps a primitive (possibly composed with a smooth wrapper so the
output is scalar and the gradients input-dependent) to a point sampler.
Samplers keep inputs away from kinks and ties so central differences are
trustworthy: relu points stay off zero, max pooling points have per-column
gaps far above the probe step.
"""

import numpy as np

from febench import ops


def _signed_away_from_zero(rng, size, low=0.2, high=1.5):
    return rng.uniform(low, high, size=size) * rng.choice([-1.0, 1.0], size=size)


def _gapped_columns(rng, t, f, scale=1.0):
    """[t, f] matrix whose columns are permutations of an even grid."""
    base = np.linspace(0.0, scale, t)
    return np.column_stack([rng.permutation(base) for _ in range(f)])


def _case_matmul(rng):
    return (lambda a, b: ops.sum_all(ops.matmul(a, b)),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])


def _case_add(rng):
    return (lambda a, b: ops.sum_all(ops.tanh(ops.add(a, b))),
            [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))])


def _case_add_bias(rng):
    return (lambda x, b: ops.sum_all(ops.tanh(ops.add(x, b))),
            [rng.normal(size=(3, 4)), rng.normal(size=4)])


def _case_mul(rng):
    return (lambda a, b: ops.sum_all(ops.mul(a, b)),
            [rng.normal(size=(3, 3)), rng.normal(size=(3, 3))])


def _case_sum(rng):
    return lambda x: ops.sum_all(x), [rng.normal(size=(2, 5))]


def _case_relu(rng):
    return (lambda x: ops.sum_all(ops.relu(x)),
            [_signed_away_from_zero(rng, (4, 4))])


def _case_tanh(rng):
    return lambda x: ops.sum_all(ops.tanh(x)), [rng.normal(size=(3, 4))]


def _case_gelu(rng):
    return lambda x: ops.sum_all(ops.gelu(x)), [rng.normal(size=(3, 4))]


def _case_layer_norm(rng):
    return (lambda x, s, o: ops.sum_all(ops.tanh(ops.layer_norm(x, s, o))),
            [rng.normal(size=(4, 6)), rng.normal(size=6), rng.normal(size=6)])


def _case_conv1d_valid(rng):
    return (lambda x, w, b: ops.sum_all(ops.tanh(ops.conv1d_valid(x, w, b))),
            [rng.normal(size=(7, 4)), rng.normal(size=(3, 4, 5)),
             rng.normal(size=5)])


def _case_max_over_time(rng):
    def fn(x):
        pooled = ops.max_over_time(x, limit=4)
        return ops.sum_all(ops.mul(pooled, pooled))
    return fn, [_gapped_columns(rng, 6, 3)]


def _case_embedding_lookup(rng):
    ids = np.array([0, 2, 2, 4, 1])
    return (lambda t: ops.sum_all(ops.tanh(ops.embedding_lookup(t, ids=ids))),
            [rng.normal(size=(5, 4))])


def _case_scaled_dot_attention(rng):
    def fn(q, k, v):
        out = ops.scaled_dot_attention(q, k, v, num_heads=2, valid_length=4)
        return ops.sum_all(ops.mul(out, out))
    return fn, [rng.normal(size=(5, 6)) for _ in range(3)]


def _case_concat(rng):
    return (lambda a, b: ops.sum_all(ops.tanh(ops.concat([a, b]))),
            [rng.normal(size=(2, 3)), rng.normal(size=(4, 3))])


def _case_stack(rng):
    def fn(a, b, c):
        s = ops.stack([a, b, c])
        return ops.sum_all(ops.mul(s, s))
    return fn, [rng.normal(size=(2, 2)) for _ in range(3)]


def _case_linear(rng):
    return (lambda x, w, b: ops.sum_all(ops.tanh(ops.linear(x, w, b))),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)])


def _case_linear_vec(rng):
    return (lambda x, w, b: ops.sum_all(ops.tanh(ops.linear(x, w, b))),
            [rng.normal(size=4), rng.normal(size=(4, 2)), rng.normal(size=2)])


def _case_softmax_xent(rng):
    targets = rng.integers(0, 3, size=4)
    return (lambda l: ops.softmax_xent(l, targets=targets),
            [rng.normal(size=(4, 3))])


def _case_sigmoid_bce(rng):
    targets = rng.integers(0, 2, size=(3, 4)).astype(np.float64)
    return (lambda l: ops.sigmoid_bce(l, targets=targets),
            [rng.normal(size=(3, 4))])


def _e2e_setup(rng):
    from febench.cnn import CnnHeadConfig
    from febench.cnn import expected_shapes as head_shapes
    from febench.encoders import EncoderConfig
    from febench.encoders import expected_shapes as encoder_shapes

    enc_cfg = EncoderConfig(kind="transformer", hidden=8, vocab_size=12,
                            layers=1, heads=2, max_positions=10)
    head_cfg = CnnHeadConfig(hidden=8, classes=2, kernel_sizes=(2, 3), filters=3)
    enc_arrays, head_arrays = {}, {}
    for name, shape in encoder_shapes(enc_cfg).items():
        if name.endswith("norm.scale"):
            enc_arrays[name] = np.ones(shape) + 0.05 * rng.normal(size=shape)
        else:
            enc_arrays[name] = 0.2 * rng.normal(size=shape)
    for name, shape in head_shapes(head_cfg).items():
        head_arrays[name] = 0.2 * rng.normal(size=shape)
    ids = rng.integers(0, 12, size=8)
    valid = 6
    target = np.array([int(rng.integers(0, 2))])
    return enc_cfg, head_cfg, enc_arrays, head_arrays, ids, valid, target


def e2e_frozen_encoder_case(rng):
    """Loss as a function of head weights only; the encoder is a frozen constant."""
    from febench.cnn import CnnHeadWeights, cnn_forward
    from febench.cnn import expected_shapes as head_shapes
    from febench.encoders import EncoderWeights, encoder_forward
    from febench.tensor import Tensor

    enc_cfg, head_cfg, enc_arrays, head_arrays, ids, valid, target = _e2e_setup(rng)
    head_names = sorted(head_shapes(head_cfg))

    def fn(*head_tensors):
        frozen = EncoderWeights(enc_cfg, {
            name: Tensor(arr) for name, arr in enc_arrays.items()})
        hidden = encoder_forward(enc_cfg, frozen, ids, valid)
        head = CnnHeadWeights(head_cfg, dict(zip(head_names, head_tensors)))
        logits = cnn_forward(head_cfg, head, hidden, valid)
        return ops.softmax_xent(ops.stack([logits]), targets=target)

    return fn, [head_arrays[n] for n in head_names]


def e2e_transformer_case(rng):
    """Smooth scalar of the hidden sequence, differentiated in every encoder weight.

    The probe stays smooth (tanh, no pooling/relu) so each coordinate carries
    a gradient well above the finite-difference noise floor.
    """
    from febench.encoders import EncoderWeights, encoder_forward
    from febench.encoders import expected_shapes as encoder_shapes

    enc_cfg, _, enc_arrays, _, ids, valid, _ = _e2e_setup(rng)
    enc_names = sorted(encoder_shapes(enc_cfg))
    probe = rng.normal(size=(8, enc_cfg.hidden))

    def fn(*tensors):
        enc = EncoderWeights(enc_cfg, dict(zip(enc_names, tensors)))
        hidden = encoder_forward(enc_cfg, enc, ids, valid)
        from febench.tensor import Tensor
        return ops.sum_all(ops.tanh(ops.mul(hidden, Tensor(probe))))

    return fn, [enc_arrays[n] for n in enc_names]


PRIMITIVE_GRAD_CASES = {
    "matmul": _case_matmul,
    "add": _case_add,
    "add_bias": _case_add_bias,
    "mul": _case_mul,
    "sum": _case_sum,
    "relu": _case_relu,
    "tanh": _case_tanh,
    "gelu": _case_gelu,
    "layer_norm": _case_layer_norm,
    "conv1d_valid": _case_conv1d_valid,
    "max_over_time": _case_max_over_time,
    "embedding_lookup": _case_embedding_lookup,
    "scaled_dot_attention": _case_scaled_dot_attention,
    "concat": _case_concat,
    "stack": _case_stack,
    "linear": _case_linear,
    "linear_vec": _case_linear_vec,
    "softmax_xent": _case_softmax_xent,
    "sigmoid_bce": _case_sigmoid_bce,
}
