"""Dense tensors on numpy storage with taped reverse-mode differentiation.

A :class:`Tensor` wraps one contiguous float array.  Primitive applications
(see :mod:`febench.ops`) append entries to the thread's active
:class:`ComputationRecord`; :func:`backward` replays the record once in
reverse to produce exact gradients for every tensor that requires them.
Frozen tensors (``requires_grad=False``) never receive gradients, and
subgraphs reachable only through frozen tensors are not taped for backward
at all.

Training arithmetic runs in float32.  :func:`grad_check` re-runs the same
code paths in float64 and compares against central finite differences.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from .profiling import active_ledger


class ShapeMismatchError(ValueError):
    """Operation inputs have incompatible shapes."""


class KernelTooLongError(ShapeMismatchError):
    """A convolution kernel is longer than the input sequence."""


class NonScalarLossError(ValueError):
    """backward/grad_check was handed a non-scalar output."""


class StaleRecordError(RuntimeError):
    """A computation record was traversed twice without a new forward pass."""


_tid_counter = itertools.count(1)
_state = threading.local()


def _record_stack():
    stack = getattr(_state, "records", None)
    if stack is None:
        stack = _state.records = []
    return stack


def current_record():
    """The record ops append to: innermost active one, else a per-thread default."""
    stack = _record_stack()
    if stack:
        return stack[-1]
    ambient = getattr(_state, "ambient", None)
    if ambient is None:
        ambient = _state.ambient = ComputationRecord()
    return ambient


def grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable taping for backward inside the block (forward only)."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A dense float array, optionally participating in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "tid", "category", "group",
                 "_record", "_mem", "_grad_mem")

    def __init__(self, data, requires_grad=False, category="activations", group=None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.tid = next(_tid_counter)
        self.category = category
        self.group = group
        self._record = None
        self._grad_mem = None
        ledger = active_ledger()
        if ledger is not None:
            ledger.record_alloc(category, arr.nbytes, group=group)
            self._mem = (ledger, category, group, arr.nbytes)
        else:
            self._mem = None

    @classmethod
    def param(cls, data, group=None):
        """A trainable parameter tensor, ledgered under 'parameters'."""
        return cls(data, requires_grad=True, category="parameters", group=group)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def release_storage(self):
        """Report this tensor's bytes as freed. Idempotent."""
        if self._mem is not None:
            ledger, category, group, nbytes = self._mem
            ledger.record_free(category, nbytes, group=group)
            self._mem = None

    def _set_grad(self, grad_array):
        if self._grad_mem is not None:
            self.clear_grad()
        self.grad = grad_array
        ledger = active_ledger()
        if ledger is not None:
            ledger.record_alloc("gradients", grad_array.nbytes, group=self.group)
            self._grad_mem = (ledger, grad_array.nbytes)

    def clear_grad(self):
        if self._grad_mem is not None:
            ledger, nbytes = self._grad_mem
            ledger.record_free("gradients", nbytes, group=self.group)
            self._grad_mem = None
        self.grad = None

    def __repr__(self):
        flags = []
        if self.requires_grad:
            flags.append("grad")
        if self.group:
            flags.append(self.group)
        tag = " ".join([""] + flags) if flags else ""
        return f"<Tensor #{self.tid} shape={tuple(self.shape)} {self.dtype}{tag}>"


class _Entry:
    __slots__ = ("kind", "inputs", "output", "backward_fn")

    def __init__(self, kind, inputs, output, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class ComputationRecord:
    """Ordered tape of primitive applications for one forward/backward cycle.

    Entries are appended in execution order, so every input precedes its
    consumers; backward walks them once in reverse.  The record also owns the
    lifecycle of the activations it produced: :meth:`release` reports their
    bytes (and any gradients of the last traversal) as freed.
    """

    def __init__(self):
        self.entries = []
        self._fresh = True
        self._grad_tensors = []

    def __enter__(self):
        _record_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _record_stack().pop()
        return False

    def append(self, kind, inputs, output, backward_fn):
        self.entries.append(_Entry(kind, tuple(inputs), output, backward_fn))
        self._fresh = True

    def release(self):
        """Free all activations recorded here plus gradients of the last backward."""
        for entry in self.entries:
            entry.output.release_storage()
        for t in self._grad_tensors:
            t.clear_grad()
        self.entries.clear()
        self._grad_tensors = []
        self._fresh = True


def backward(loss):
    """Reverse-mode traversal from a scalar loss.

    Returns ``{tensor id -> gradient array}`` covering every tensor with
    ``requires_grad=True`` that the loss depends on; frozen tensors and
    anything reachable only through them are absent.  Each traversed tensor
    also gets its ``grad`` attribute set.
    """
    if loss.data.ndim != 0:
        raise NonScalarLossError(f"loss must be scalar, got shape {tuple(loss.shape)}")
    record = loss._record if loss._record is not None else current_record()
    if not record._fresh:
        raise StaleRecordError("record already traversed; run a new forward pass first")
    record._fresh = False

    # slot layout: [tensor, grad array, owns_array]
    pending = {loss.tid: [loss, np.ones((), dtype=loss.data.dtype), True]}
    for entry in reversed(record.entries):
        if entry.backward_fn is None:
            continue
        slot = pending.get(entry.output.tid)
        if slot is None:
            continue
        input_grads = entry.backward_fn(slot[1])
        for t, g in zip(entry.inputs, input_grads):
            if g is None or not t.requires_grad:
                continue
            got = pending.get(t.tid)
            if got is None:
                pending[t.tid] = [t, g, False]
            elif got[2]:
                got[1] += g
            else:
                got[1] = got[1] + g
                got[2] = True

    grad_map = {}
    touched = []
    for tid, (t, g, _) in pending.items():
        g = np.asarray(g)
        t._set_grad(g)
        touched.append(t)
        grad_map[tid] = g
    record._grad_tensors = touched
    return grad_map


def grad_check(function, point, eps=1e-5):
    """Max relative error between taped gradients and central differences.

    ``function`` maps the tensors in ``point`` (passed positionally) to a
    scalar Tensor.  The check runs in float64; ``point`` is copied, never
    mutated.  Error per coordinate is |analytic - numeric| divided by
    max(1e-8, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    points = [Tensor(np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64),
                     requires_grad=True) for p in point]
    with ComputationRecord() as record:
        out = function(*points)
        if out.data.ndim != 0:
            raise NonScalarLossError(
                f"grad_check needs a scalar-valued program, got shape {tuple(out.shape)}")
        grad_map = backward(out)
        analytic = [np.array(grad_map.get(p.tid, np.zeros_like(p.data))) for p in points]
        record.release()

    def evaluate():
        with no_grad(), ComputationRecord() as rec:
            y = function(*points)
            value = float(y.data)
            rec.release()
        return value

    max_err = 0.0
    for p, grads in zip(points, analytic):
        flat = p.data.reshape(-1)
        flat_grads = grads.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + eps
            f_plus = evaluate()
            flat[j] = saved - eps
            f_minus = evaluate()
            flat[j] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = flat_grads[j]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            max_err = max(max_err, err)
    return max_err
