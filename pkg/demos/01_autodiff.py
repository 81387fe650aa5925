"""A tour of the tape-based tensor core.

Every operation appends an entry to the active computation record; calling
backward() walks the record in reverse and accumulates gradients for every
tensor that asked for them. Frozen tensors simply never appear in the
gradient map, which is the whole trick behind feature extraction.
"""

import numpy as np

from febench import ComputationRecord, Tensor, backward, grad_check, no_grad
from febench import ops


def main():
    print("== forward and backward through a small expression ==")
    w = Tensor.param(np.array([[0.5, -0.2], [0.1, 0.3]]))
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=False)
    with ComputationRecord() as record:
        hidden = ops.tanh(ops.matmul(x, w))
        loss = ops.sum_all(ops.mul(hidden, hidden))
        grads = backward(loss)
        print(f"loss = {float(loss.data):.6f}")
        print(f"dL/dw =\n{grads[w.tid]}")
        assert x.tid not in grads, "frozen input stays out of the map"
        record.release()

    print()
    print("== the same gradient, checked against finite differences ==")

    def objective(weights):
        hidden = ops.tanh(ops.matmul(Tensor(np.array([[1.0, 2.0]])), weights))
        return ops.sum_all(ops.mul(hidden, hidden))

    error = grad_check(objective, [w], eps=1e-5)
    print(f"max relative error vs central differences: {error:.2e}")

    print()
    print("== no_grad: taping without backward state ==")
    with ComputationRecord() as record:
        with no_grad():
            silent = ops.matmul(x, w)
        print(f"output computed: {silent.data.round(3).tolist()}, "
              f"requires_grad={silent.requires_grad}")
        record.release()

    print()
    print("== a frozen parameter never gets gradients or optimizer state ==")
    frozen = Tensor(np.ones((2, 2)), requires_grad=False)
    live = Tensor.param(np.ones((2, 2)))
    with ComputationRecord() as record:
        out = ops.sum_all(ops.matmul(frozen, live))
        grads = backward(out)
        record.release()
    print(f"gradient map covers live param: {live.tid in grads}, "
          f"frozen param: {frozen.tid in grads}")


if __name__ == "__main__":
    main()
