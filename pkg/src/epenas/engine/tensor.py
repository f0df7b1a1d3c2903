"""Dense float64 tensors with a reverse-mode tape.

Only gradients with respect to tape inputs (tensors created with
``requires_grad=True``) are propagated. Layer parameters are plain numpy
arrays and never receive gradients, which keeps the backward pass to the
single quantity the scorer needs: d(scalar)/d(input batch).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Tuple

import numpy as np

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class TapeError(RuntimeError):
    """Raised when a gradient is requested through a missing tape."""


class TapeNode:
    """One recorded operation.

    Holds references to the parent nodes and the backward closure (with
    whatever forward values it cached), but not the output array itself,
    so activations are freed as soon as the forward pass drops them.
    """

    __slots__ = ("op", "parents", "backward", "shape")

    def __init__(self, op: str, parents: Tuple[Optional["TapeNode"], ...], backward, shape):
        self.op = op
        self.parents = parents
        self.backward = backward
        self.shape = shape


class Tensor:
    """An immutable N-d float64 array, optionally recorded on a tape.

    Args:
        data: Array-like payload. Always converted to C-contiguous float64.
        requires_grad: Mark this tensor as a differentiation target (a tape leaf).
        op: Name of the producing operation, for diagnostics.
    """

    __slots__ = ("data", "node", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", node: Optional[TapeNode] = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.op = op
        if node is None and requires_grad:
            node = TapeNode(op, (), None, arr.shape)
        self.node = node

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.zeros(tuple(shape)), op="zeros")

    @property
    def requires_grad(self) -> bool:
        return self.node is not None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, op=self.op)

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def sum(self) -> "Tensor":
        return sum_all(self)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: BackwardFn,
    op: str,
) -> Tensor:
    """Wrap an op result, recording it on the tape only when needed."""
    if any(p.node is not None for p in parents):
        node = TapeNode(op, tuple(p.node for p in parents), backward, data.shape)
        return Tensor(data, op=op, node=node)
    return Tensor(data, op=op)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        return g, g

    return make_result(a.data + b.data, (a, b), backward, "add")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g.reshape(()), shape),)

    return make_result(np.array([x.data.sum()]), (x,), backward, "sum")


def _topological_order(root: TapeNode) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def backward_to_input(output: Tensor, inputs: Tensor) -> np.ndarray:
    """Exact gradient of a single-element ``output`` with respect to ``inputs``.

    Each tape node is visited once, in reverse topological order.

    Raises:
        TapeError: ``output`` is detached, or ``inputs`` does not feed it.
        ShapeError: ``output`` holds more than one value.
    """
    if output.size != 1:
        raise ShapeError(f"backward_to_input needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise TapeError("output is detached: no tape records how it was computed")
    if not inputs.requires_grad:
        raise TapeError("inputs must be a tape leaf created with requires_grad=True")

    leaf = inputs.node
    grads = {id(output.node): np.ones(output.shape)}
    found = False
    result = None
    for node in reversed(_topological_order(output.node)):
        g = grads.pop(id(node), None)
        if node is leaf:
            found = True
            result = g
            continue
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if parent is None or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if not found:
        raise TapeError("inputs is not reachable from output on the tape")
    if result is None:
        return np.zeros(inputs.shape)
    return np.array(np.broadcast_to(result, inputs.shape), dtype=np.float64)


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4
) -> np.ndarray:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad
