"""Minimal reverse-mode automatic differentiation on numpy arrays.

Just enough tape machinery for a small dense network: matrix products,
broadcast add, elementwise arithmetic, tanh/softplus/sigmoid, and full
reductions. Gradients are accumulated by walking the tape in reverse
topological order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Tensor:
    """A value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value - b.value, parents=(a, b))

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def backward(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backward(g):
        return g @ b.value.T, a.value.T @ g

    out._backward = backward
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.tanh(a.value), parents=(a,))

    def backward(g):
        return (g * (1.0 - out.value ** 2),)

    out._backward = backward
    return out


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.logaddexp(0.0, a.value), parents=(a,))

    def backward(g):
        return (g * expit(a.value),)

    out._backward = backward
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(expit(a.value), parents=(a,))

    def backward(g):
        return (g * out.value * (1.0 - out.value),)

    out._backward = backward
    return out


def square(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value ** 2, parents=(a,))

    def backward(g):
        return (g * 2.0 * a.value,)

    out._backward = backward
    return out


def tsum(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.sum(), parents=(a,))

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    out._backward = backward
    return out


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value * c, parents=(a,))

    def backward(g):
        return (g * c,)

    out._backward = backward
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen, stack = [], set(), [(root, False)]
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
            stack.append((p, False))
    return order


def backprop(root: Tensor) -> None:
    """Populate ``.grad`` on every node reachable from ``root`` (a scalar)."""
    if root.value.shape != ():
        raise ValueError("backprop root must be a scalar")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones(())
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        for parent, g in zip(node.parents, node._backward(node.grad)):
            parent.grad = g if parent.grad is None else parent.grad + g
