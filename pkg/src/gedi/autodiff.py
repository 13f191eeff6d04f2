"""Reverse-mode automatic differentiation over numpy float64 arrays.

Small fixed op set sized for MLP training: matmul, add (same-shape, bias
broadcast, or scalar), elementwise multiply, scalar scaling, ReLU/LeakyReLU,
exp, clamped log, logsumexp and softmax along an axis, sum/mean reductions,
squared L2 norm, and a column-gather. Each op records its parents and a
function mapping the output adjoint to parent adjoints; `backward` accumulates
into `.grad`, while `grad_wrt_input` routes adjoints through a side table so
parameter grads are left untouched.
"""

import numpy as np

# Arguments of log are clamped below at this value; the derivative is zero in
# the clamped region.
LOG_CLAMP = 1e-12


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    """Raised when an op receives incompatible shapes."""

    def __init__(self, op, shape_a, shape_b):
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{op}: incompatible shapes {self.shape_a} and {self.shape_b}")


class GraphError(AutodiffError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_grads")

    def __init__(self, data, _parents=(), _grads=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        # _grads: callable(adjoint ndarray) -> tuple of parent adjoints,
        # one entry per slot in _parents. None for leaves.
        self._grads = _grads

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = "leaf" if self._grads is None else "node"
        return f"Tensor({tag}, shape={self.shape})"

    # Operator sugar; the named functions below do the work.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def relu(self):
        return relu(self)

    def leaky_relu(self, slope=0.2):
        return leaky_relu(self, slope)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def logsumexp(self, axis):
        return logsumexp(self, axis)

    def softmax(self, axis):
        return softmax(self, axis)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def sq_norm(self):
        return sq_norm(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def grads(g):
        return g @ bd.T, ad.T @ g

    return Tensor(ad @ bd, (a, b), grads)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        def grads(g):
            return g, g
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        # bias broadcast over rows
        def grads(g):
            return g, g.sum(axis=0)
    elif b.size == 1 and b.ndim == 0:
        def grads(g):
            return g, np.asarray(np.sum(g))
    elif a.size == 1 and a.ndim == 0:
        def grads(g):
            return np.asarray(np.sum(g)), g
    else:
        raise ShapeError("add", a.shape, b.shape)
    return Tensor(a.data + b.data, (a, b), grads)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        ad, bd = a.data, b.data

        def grads(g):
            return g * bd, g * ad
    elif b.size == 1 and b.ndim == 0:
        ad, bd = a.data, b.data

        def grads(g):
            return g * bd, np.asarray(np.sum(g * ad))
    elif a.size == 1 and a.ndim == 0:
        ad, bd = a.data, b.data

        def grads(g):
            return np.asarray(np.sum(g * bd)), g * ad
    else:
        raise ShapeError("mul", a.shape, b.shape)
    return Tensor(a.data * b.data, (a, b), grads)


def scale(a, c):
    a = _as_tensor(a)
    c = float(c)

    def grads(g):
        return (g * c,)

    return Tensor(a.data * c, (a,), grads)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0

    def grads(g):
        return (g * mask,)

    # np.maximum (unlike a mask select) lets NaN inputs propagate, so a
    # poisoned batch surfaces as a non-finite loss instead of reading as 0
    return Tensor(np.maximum(a.data, 0.0), (a,), grads)


def leaky_relu(a, slope=0.2):
    a = _as_tensor(a)
    w = np.where(a.data > 0, 1.0, float(slope))

    def grads(g):
        return (g * w,)

    return Tensor(a.data * w, (a,), grads)


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def grads(g):
        return (g * out_data,)

    return Tensor(out_data, (a,), grads)


def log(a):
    """Natural log with the argument clamped below at LOG_CLAMP."""
    a = _as_tensor(a)
    clamped = np.maximum(a.data, LOG_CLAMP)
    # zero slope where the clamp is active
    dmask = np.where(a.data > LOG_CLAMP, 1.0 / clamped, 0.0)

    def grads(g):
        return (g * dmask,)

    return Tensor(np.log(clamped), (a,), grads)


def logsumexp(a, axis):
    """log sum exp along `axis` with the max-subtraction trick."""
    a = _as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    s = np.exp(a.data - m)
    t = np.sum(s, axis=axis, keepdims=True)
    out_data = np.squeeze(m + np.log(t), axis=axis)
    soft = s / t

    def grads(g):
        return (np.expand_dims(g, axis) * soft,)

    return Tensor(out_data, (a,), grads)


def softmax(a, axis):
    a = _as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    p = e / np.sum(e, axis=axis, keepdims=True)

    def grads(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return Tensor(p, (a,), grads)


def tsum(a, axis=None):
    a = _as_tensor(a)
    in_shape = a.shape
    if axis is None:
        def grads(g):
            return (np.broadcast_to(g, in_shape).copy(),)

        return Tensor(np.sum(a.data), (a,), grads)

    def grads(g):
        return (np.broadcast_to(np.expand_dims(g, axis), in_shape).copy(),)

    return Tensor(np.sum(a.data, axis=axis), (a,), grads)


def tmean(a, axis=None):
    a = _as_tensor(a)
    in_shape = a.shape
    if axis is None:
        n = a.size

        def grads(g):
            return (np.broadcast_to(g / n, in_shape).copy(),)

        return Tensor(np.mean(a.data), (a,), grads)
    n = in_shape[axis]

    def grads(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), in_shape).copy(),)

    return Tensor(np.mean(a.data, axis=axis), (a,), grads)


def sq_norm(a):
    """Squared L2 norm of all entries, as a 0-d tensor."""
    a = _as_tensor(a)
    ad = a.data

    def grads(g):
        return (2.0 * g * ad,)

    return Tensor(np.asarray(np.sum(ad * ad)), (a,), grads)


def take_cols(a, idx):
    """Gather columns of a 2-D tensor: out[:, k] = a[:, idx[k]].

    The backward pass scatter-adds, so repeated indices accumulate.
    """
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("take_cols", a.shape, (len(idx),))
    idx = np.asarray(idx, dtype=np.intp)
    in_shape = a.shape

    def grads(g):
        buf = np.zeros(in_shape)
        np.add.at(buf, (slice(None), idx), g)
        return (buf,)

    return Tensor(a.data[:, idx], (a,), grads)


def _topo(root):
    """Parents-before-children order; iterate reversed for backprop."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _propagate(root, order):
    """One adjoint pass seeded with 1.0 at root, kept in a side table."""
    adj = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = adj.get(id(node))
        if g is None or node._grads is None:
            continue
        for parent, contrib in zip(node._parents, node._grads(g)):
            pid = id(parent)
            if pid in adj:
                adj[pid] = adj[pid] + contrib
            else:
                adj[pid] = contrib
    return adj


def backward(root, accumulate=False):
    """Backpropagate from a scalar root, accumulating into `.grad`.

    Each call adds exactly one unit of adjoint. Calling twice on the same root
    raises unless accumulate=True; grads from distinct roots always add into
    shared leaves (reset with zero_grad).
    """
    if root.size != 1:
        raise GraphError(f"backward root must be a scalar, got shape {root.shape}")
    if root.grad is not None and not accumulate:
        raise GraphError("backward was already run from this root; pass accumulate=True to add another pass")
    order = _topo(root)
    adj = _propagate(root, order)
    for node in order:
        g = adj.get(id(node))
        if g is not None:
            node.grad = g if node.grad is None else node.grad + g


def collect_grads(root, targets):
    """Gradients of a scalar root w.r.t. `targets` without touching `.grad`.

    Adjoints flow through a side table keyed by node identity, so this is safe
    to call mid-training. Raises GraphError if some target is unreachable.
    """
    if root.size != 1:
        raise GraphError(f"gradient root must be a scalar, got shape {root.shape}")
    order = _topo(root)
    in_graph = {id(n) for n in order}
    for t in targets:
        if id(t) not in in_graph:
            raise GraphError("target tensor is not part of this graph")
    adj = _propagate(root, order)
    return [adj.get(id(t), np.zeros_like(t.data)) for t in targets]


def grad_wrt_input(root, x):
    """d(root)/d(x) as an ndarray; parameter `.grad` fields are not disturbed."""
    return collect_grads(root, [x])[0]
