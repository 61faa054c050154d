"""Small reverse-mode automatic differentiation engine on numpy arrays.

Every value is a ``Tensor`` wrapping a float64 ndarray.  Operations build a
graph by recording their input tensors and a backward closure; calling
``backward()`` on a scalar result walks the graph once in reverse
topological order and accumulates gradients into ``.grad`` buffers.
Gradients add across calls, so callers are expected to ``zero_grad()``
between steps.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus optional gradient bookkeeping.

    The data buffer is treated as immutable once the tensor participates
    in a graph; the only sanctioned in-place mutation is an optimizer
    updating leaf parameters between steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op_kind")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("tensor created with non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op_kind = "leaf"

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = arr
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out.op_kind = "leaf"
        return out

    @classmethod
    def _from_op(cls, arr, parents, backward, op_kind: str) -> "Tensor":
        out = cls._wrap(np.asarray(arr, dtype=np.float64))
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out.op_kind = op_kind
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op_kind}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``.

        Only defined for single-element tensors (losses).
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = _toposort(self)
        acc = {self: np.ones_like(self.data)}
        for node in order:
            grad_out = acc.pop(node, None)
            if grad_out is None:
                continue
            if node.requires_grad:
                if node.grad is not None:
                    node.grad = node.grad + grad_out
                elif node._backward is None:
                    # leaf parameter: own the buffer (optimizers mutate it)
                    node.grad = np.array(grad_out)
                else:
                    node.grad = grad_out
            if node._backward is None:
                continue
            for parent, g in zip(node._parents, node._backward(grad_out)):
                if g is None or not parent.requires_grad:
                    continue
                if parent in acc:
                    acc[parent] = acc[parent] + g
                else:
                    acc[parent] = g

    # operator sugar; scalars are accepted on either side of + - *
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor):
    """Reverse topological order via an iterative post-order walk."""
    order = []
    seen = set()
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return arr


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    # exact shape match or one side scalar; no general broadcasting
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # collapse a full-shape gradient onto a scalar operand
    if grad.shape == tuple(shape):
        return grad
    return np.sum(grad).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")
    out = _check_finite(a.data + b.data, "add")

    def backward(g):
        return _reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")
    out = _check_finite(a.data - b.data, "sub")

    def backward(g):
        return _reduce_to(g, a.data.shape), _reduce_to(-g, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")
    out = _check_finite(a.data * b.data, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.data.shape), _reduce_to(g * a.data, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D or 2-D left operand and 2-D right operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim not in (1, 2):
        raise ValueError(f"matmul: unsupported ranks {a.data.ndim} @ {b.data.ndim}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul: inner dims differ {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.data.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out, (a, b), backward, "matmul")


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.data.shape),)

    return Tensor._from_op(out, (x,), backward, "reshape")


def concat_last_dim(tensors) -> Tensor:
    """Concatenate along the trailing axis; all other dims must agree."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat_last_dim: empty input")
    lead = ts[0].data.shape[:-1]
    for t in ts[1:]:
        if t.data.shape[:-1] != lead:
            raise ValueError("concat_last_dim: leading dims differ")
    out = np.concatenate([t.data for t in ts], axis=-1)
    widths = [t.data.shape[-1] for t in ts]
    edges = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[..., edges[i]:edges[i + 1]] for i in range(len(ts)))

    return Tensor._from_op(out, tuple(ts), backward, "concat_last_dim")


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out = np.array(np.sum(x.data))

    def backward(g):
        return (np.broadcast_to(g, x.data.shape).copy() if g.shape != x.data.shape else g,)

    return Tensor._from_op(out, (x,), backward, "sum_all")


def finite_diff_check(f, x: Tensor, h: float = 1e-6) -> float:
    """Compare analytic gradients of scalar ``f`` against central differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
    """
    base = np.array(x.data, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True)
    out = f(leaf)
    if out.data.size != 1:
        raise ValueError("finite_diff_check: f must return a scalar")
    out.backward()
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad

    numeric = np.empty_like(base)
    flat = base.ravel()
    num_flat = numeric.ravel()
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        hi = float(f(Tensor(base)).data)
        flat[i] = saved - h
        lo = float(f(Tensor(base)).data)
        flat[i] = saved
        num_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom)) if base.size else 0.0
