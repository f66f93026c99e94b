"""Array-valued reverse-mode autodiff.

Each :class:`Tensor` remembers its parents and a closure that pushes its
``grad`` back into them.  Graphs are small (one node per layer op, batched), so
a plain topological sort is enough.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward: Callable[[], None] = lambda: None
        self.op = op

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return self.transpose()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    def numpy(self) -> np.ndarray:
        return self.data

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def backward(self, upstream=None):
        """Accumulate d(self)/d(leaf) * upstream into every leaf's ``grad``."""
        order = []
        seen = set()
        _iterative_topo(self, order, seen)
        if upstream is None:
            upstream = np.ones_like(self.data)
        self._accum(np.broadcast_to(upstream, self.data.shape))
        for node in reversed(order):
            if node.grad is not None:
                node._backward()
        # intermediate grads are not needed after the sweep
        for node in order:
            if node._parents:
                node.grad = None

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _iterative_topo(root: Tensor, order: list, seen: set):
    # explicit stack keeps deep graphs clear of the recursion limit
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _node(data, parents: Sequence[Tensor], op: str) -> Tensor:
    return Tensor(data, _parents=tuple(parents), op=op)


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data + b.data, (a, b), "add")

    def backward():
        a._accum(unbroadcast(out.grad, a.shape))
        b._accum(unbroadcast(out.grad, b.shape))

    out._backward = backward
    return out


def neg(a: Tensor) -> Tensor:
    out = _node(-a.data, (a,), "neg")
    out._backward = lambda: a._accum(-out.grad)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data * b.data, (a, b), "mul")

    def backward():
        a._accum(unbroadcast(out.grad * b.data, a.shape))
        b._accum(unbroadcast(out.grad * a.data, b.shape))

    out._backward = backward
    return out


def power(a: Tensor, p: float) -> Tensor:
    out = _node(a.data ** p, (a,), "pow")
    out._backward = lambda: a._accum(out.grad * p * a.data ** (p - 1))
    return out


def exp(a: Tensor) -> Tensor:
    out = _node(np.exp(a.data), (a,), "exp")
    out._backward = lambda: a._accum(out.grad * out.data)
    return out


def log(a: Tensor) -> Tensor:
    out = _node(np.log(a.data), (a,), "log")
    out._backward = lambda: a._accum(out.grad / a.data)
    return out


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.data), (a,), "tanh")
    out._backward = lambda: a._accum(out.grad * (1.0 - out.data ** 2))
    return out


# -- reductions and shape ---------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape))

    out._backward = backward
    return out


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    out = _node(a.data.reshape(shape), (a,), "reshape")
    out._backward = lambda: a._accum(out.grad.reshape(a.shape))
    return out


def transpose(a: Tensor, axes=None) -> Tensor:
    out = _node(np.transpose(a.data, axes), (a,), "transpose")

    def backward():
        inv = None if axes is None else np.argsort(axes)
        a._accum(np.transpose(out.grad, inv))

    out._backward = backward
    return out


def getitem(a: Tensor, idx) -> Tensor:
    out = _node(a.data[idx], (a,), "getitem")

    fancy = any(isinstance(i, (list, np.ndarray)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def backward():
        g = np.zeros_like(a.data)
        if fancy:
            np.add.at(g, idx, out.grad)
        else:
            g[idx] += out.grad
        a._accum(g)

    out._backward = backward
    return out


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat")

    def backward():
        edges = np.cumsum([t.shape[axis] for t in tensors])[:-1]
        for t, g in zip(tensors, np.split(out.grad, edges, axis=axis)):
            t._accum(g)

    out._backward = backward
    return out


def broadcast_to(a: Tensor, shape) -> Tensor:
    out = _node(np.broadcast_to(a.data, shape).copy(), (a,), "broadcast")
    out._backward = lambda: a._accum(unbroadcast(out.grad, a.shape))
    return out


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matmul over the last two axes, numpy broadcasting on the rest."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = _node(a.data @ b.data, (a, b), "matmul")

    def backward():
        g = out.grad
        a._accum(unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        b._accum(unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    out._backward = backward
    return out


def custom(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap a hand-written kernel: ``backward_fn(grad_out)`` returns one gradient per parent."""
    out = _node(data, parents, op)

    def backward():
        grads = backward_fn(out.grad)
        for p, g in zip(parents, grads):
            if g is not None:
                p._accum(g)

    out._backward = backward
    return out


def vjp(fn: Callable, inputs: Sequence[np.ndarray], upstream=None) -> list:
    """Gradients of ``<upstream, fn(*inputs)>`` with respect to each input array."""
    leaves = [parameter(x) for x in inputs]
    out = fn(*leaves)
    out.backward(upstream)
    return [np.zeros_like(l.data) if l.grad is None else l.grad for l in leaves]
