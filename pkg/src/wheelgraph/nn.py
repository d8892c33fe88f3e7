"""Dense-tensor core with tape-based reverse-mode gradients.

The op vocabulary is fixed and small: matmul, bias add, relu, softmax
(plain and grouped-by-edge), L2 normalization, concat, gather/scatter,
elementwise arithmetic, and reductions. Every op records a closure that
propagates the upstream gradient to its parents; `backward` walks the
recorded graph in reverse topological order. All arithmetic is float64.
"""

import numpy as np

from .errors import (
    DegenerateVectorError,
    ShapeError,
    UnsupportedOpError,
)

_SUPPORTED_OPS = {
    "leaf",
    "matmul",
    "add_bias",
    "add",
    "sub",
    "mul",
    "scale",
    "dense_channels",
    "relu",
    "softmax",
    "edge_softmax",
    "l2_normalize",
    "l2_normalize_rows",
    "concat_cols",
    "rows",
    "scatter_matrix",
    "normalize_rows",
    "reshape",
    "sum_all",
    "mean_all",
}


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode.

    `requires_grad` marks trainable leaves; `needs_grad` is true for any
    node with a trainable tensor somewhere below it, and gates whether a
    branch participates in the backward pass at all.
    """

    __slots__ = ("data", "grad", "requires_grad", "needs_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad or any(p.needs_grad for p in parents)
        self.op = op
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"


def constant(data):
    return Tensor(data, requires_grad=False)


def parameter(data):
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


def _node(data, op, parents, backward_fn):
    out = Tensor(data, op=op, parents=parents)
    if out.needs_grad:
        out._backward = backward_fn
    return out


def matmul(a, b, ta=False, tb=False):
    """Matrix product with optional transposition of either operand."""
    if ta and tb:
        raise ShapeError("at most one operand may be transposed")
    am = a.data.T if ta else a.data
    bm = b.data.T if tb else b.data
    if am.ndim != 2 or bm.ndim != 2 or am.shape[1] != bm.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {am.shape} x {bm.shape}")
    y = am @ bm

    def backward_fn(g):
        if a.needs_grad:
            if ta:
                a._accumulate(bm @ g.T)
            elif tb:
                a._accumulate(g @ b.data)
            else:
                a._accumulate(g @ bm.T)
        if b.needs_grad:
            if tb:
                b._accumulate(g.T @ am)
            elif ta:
                b._accumulate(a.data @ g)
            else:
                b._accumulate(am.T @ g)

    return _node(y, "matmul", (a, b), backward_fn)


def add_bias(x, bias):
    """Add a length-M bias vector to every row of an N x M matrix."""
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.data.shape[1] != bias.data.shape[0]:
        raise ShapeError(f"bias shape mismatch: {x.data.shape} + {bias.data.shape}")
    y = x.data + bias.data

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(g)
        if bias.needs_grad:
            bias._accumulate(g.sum(axis=0))

    return _node(y, "add_bias", (x, bias), backward_fn)


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data + b.data

    def backward_fn(g):
        if a.needs_grad:
            a._accumulate(g)
        if b.needs_grad:
            b._accumulate(g)

    return _node(y, "add", (a, b), backward_fn)


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data - b.data

    def backward_fn(g):
        if a.needs_grad:
            a._accumulate(g)
        if b.needs_grad:
            b._accumulate(-g)

    return _node(y, "sub", (a, b), backward_fn)


def mul(a, b):
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data * b.data

    def backward_fn(g):
        if a.needs_grad:
            a._accumulate(g * b.data)
        if b.needs_grad:
            b._accumulate(g * a.data)

    return _node(y, "mul", (a, b), backward_fn)


def scale(x, c):
    """Multiply by a python scalar constant."""
    c = float(c)
    y = x.data * c

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(g * c)

    return _node(y, "scale", (x,), backward_fn)


def relu(x):
    y = np.maximum(x.data, 0.0)

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(g * (x.data > 0.0))

    return _node(y, "relu", (x,), backward_fn)


def softmax(v):
    """Stable softmax of a 1-D vector."""
    if v.data.ndim != 1 or v.data.size == 0:
        raise ShapeError(f"softmax expects a non-empty vector, got shape {v.data.shape}")
    shifted = v.data - v.data.max()
    e = np.exp(shifted)
    y = e / e.sum()

    def backward_fn(g):
        if v.needs_grad:
            v._accumulate(y * (g - np.dot(g, y)))

    return _node(y, "softmax", (v,), backward_fn)


def edge_softmax(scores, src, n_nodes):
    """Softmax of edge scores grouped by source node.

    `scores` is a length-E vector, `src[e]` the source node of edge e.
    Each source node's edges are normalized together, so the coefficients
    of every node's neighborhood sum to 1.
    """
    if scores.data.ndim != 1:
        raise ShapeError(f"edge scores must be a vector, got shape {scores.data.shape}")
    src = np.asarray(src, dtype=np.intp)
    if src.shape != scores.data.shape:
        raise ShapeError("src index list must align with scores")
    group_max = np.full(n_nodes, -np.inf)
    np.maximum.at(group_max, src, scores.data)
    e = np.exp(scores.data - group_max[src])
    group_sum = np.zeros(n_nodes)
    np.add.at(group_sum, src, e)
    y = e / group_sum[src]

    def backward_fn(g):
        if scores.needs_grad:
            gy = np.zeros(n_nodes)
            np.add.at(gy, src, g * y)
            scores._accumulate(y * (g - gy[src]))

    return _node(y, "edge_softmax", (scores,), backward_fn)


def l2_normalize(v):
    """Scale a 1-D vector to unit Euclidean norm; rejects the zero vector."""
    if v.data.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.data.shape}")
    norm = np.linalg.norm(v.data)
    if norm == 0.0:
        raise DegenerateVectorError("cannot normalize the zero vector")
    y = v.data / norm

    def backward_fn(g):
        if v.needs_grad:
            v._accumulate((g - y * np.dot(y, g)) / norm)

    return _node(y, "l2_normalize", (v,), backward_fn)


def l2_normalize_rows(x):
    """Row-wise L2 normalization; all-zero rows pass through as zeros."""
    if x.data.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {x.data.shape}")
    norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    y = x.data / safe

    def backward_fn(g):
        if x.needs_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            gx = (g - y * inner) / safe
            gx[norms[:, 0] == 0.0] = 0.0
            x._accumulate(gx)

    return _node(y, "l2_normalize_rows", (x,), backward_fn)


def concat_cols(a, b):
    """Horizontal concatenation of two matrices with equal row counts."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"cannot concat {a.data.shape} with {b.data.shape}")
    y = np.concatenate([a.data, b.data], axis=1)
    split = a.data.shape[1]

    def backward_fn(g):
        if a.needs_grad:
            a._accumulate(g[:, :split])
        if b.needs_grad:
            b._accumulate(g[:, split:])

    return _node(y, "concat_cols", (a, b), backward_fn)


def rows(x, idx):
    """Gather rows of a matrix; repeated indices accumulate on backward."""
    if x.data.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {x.data.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    y = x.data[idx]

    def backward_fn(g):
        if x.needs_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            x._accumulate(gx)

    return _node(y, "rows", (x,), backward_fn)


def scatter_matrix(values, row_idx, col_idx, n, diag=1.0):
    """Build an n x n matrix with `diag` on the diagonal and edge values scattered.

    (row_idx[e], col_idx[e]) positions must be unique and off-diagonal.
    """
    row_idx = np.asarray(row_idx, dtype=np.intp)
    col_idx = np.asarray(col_idx, dtype=np.intp)
    if values.data.ndim != 1 or values.data.shape != row_idx.shape or row_idx.shape != col_idx.shape:
        raise ShapeError("scatter indices must align with values")
    y = np.eye(n) * diag
    y[row_idx, col_idx] = values.data

    def backward_fn(g):
        if values.needs_grad:
            values._accumulate(g[row_idx, col_idx])

    return _node(y, "scatter_matrix", (values,), backward_fn)


def dense_channels(crops, contexts, quads, slices, weight, bias, image=56):
    """First dense layer evaluated against channel-structured inputs.

    Equivalent to flattening, per object, an image x image x 7 tensor in
    channel-major order, where channels 0-2 replicate the object's crop,
    3-5 replicate a per-scene context image, and channel 6 holds four
    constant quadrant values, then applying x @ W^T + b. Exploiting that
    structure drops the GEMM width from 7 P to P (P = image^2) and is
    exact up to float associativity.

    crops: (T x P) rows for every object in the batch; contexts: per-scene
    (P,) arrays; quads: (T x 4); slices: per-scene (start, stop) row ranges.
    """
    pixels = image * image
    out_dim, in_dim = weight.data.shape
    if in_dim != pixels * 7:
        raise ShapeError(f"weight expects {in_dim} inputs, structured path needs {pixels * 7}")
    if crops.shape[1] != pixels or quads.shape != (crops.shape[0], 4):
        raise ShapeError("crop/quadrant blocks do not match the image size")
    half = image // 2
    w_view = weight.data.reshape(out_dim, 7, pixels)
    w_crop = w_view[:, 0] + w_view[:, 1] + w_view[:, 2]
    w_ctx = w_view[:, 3] + w_view[:, 4] + w_view[:, 5]
    w6 = w_view[:, 6].reshape(out_dim, image, image)
    w_quad = np.stack(
        [
            w6[:, :half, :half].sum(axis=(1, 2)),
            w6[:, :half, half:].sum(axis=(1, 2)),
            w6[:, half:, :half].sum(axis=(1, 2)),
            w6[:, half:, half:].sum(axis=(1, 2)),
        ],
        axis=1,
    )
    y = crops @ w_crop.T + quads @ w_quad.T + bias.data
    for (start, stop), ctx in zip(slices, contexts):
        y[start:stop] += w_ctx @ ctx

    def backward_fn(g):
        if weight.needs_grad:
            d_crop = g.T @ crops
            d_quad = g.T @ quads
            g_scene = np.stack([g[start:stop].sum(axis=0) for start, stop in slices])
            d_ctx = g_scene.T @ np.stack(contexts)
            if weight.grad is None:
                weight.grad = np.zeros_like(weight.data)
            d = weight.grad.reshape(out_dim, 7, pixels)
            d[:, 0:3] += d_crop[:, None, :]
            d[:, 3:6] += d_ctx[:, None, :]
            quad_img = np.empty((out_dim, image, image))
            quad_img[:, :half, :half] = d_quad[:, 0, None, None]
            quad_img[:, :half, half:] = d_quad[:, 1, None, None]
            quad_img[:, half:, :half] = d_quad[:, 2, None, None]
            quad_img[:, half:, half:] = d_quad[:, 3, None, None]
            d[:, 6] += quad_img.reshape(out_dim, pixels)
        if bias.needs_grad:
            bias._accumulate(g.sum(axis=0))

    return _node(y, "dense_channels", (weight, bias), backward_fn)


def reshape(x, shape):
    """Shape-only view; the element count must be preserved."""
    y = x.data.reshape(shape)
    original = x.data.shape

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(g.reshape(original))

    return _node(y, "reshape", (x,), backward_fn)


def normalize_rows(m):
    """Divide each row by its sum. Row sums must be nonzero."""
    if m.data.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.data.shape}")
    sums = m.data.sum(axis=1, keepdims=True)
    if np.any(sums == 0.0):
        raise DegenerateVectorError("row with zero sum cannot be normalized")
    y = m.data / sums

    def backward_fn(g):
        if m.needs_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            m._accumulate((g - inner) / sums)

    return _node(y, "normalize_rows", (m,), backward_fn)


def sum_all(x):
    y = x.data.sum()

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(np.full_like(x.data, float(g)))

    return _node(y, "sum_all", (x,), backward_fn)


def mean_all(x):
    y = x.data.mean()
    size = x.data.size

    def backward_fn(g):
        if x.needs_grad:
            x._accumulate(np.full_like(x.data, float(g) / size))

    return _node(y, "mean_all", (x,), backward_fn)


def backward(output, seed=None):
    """Propagate gradients from `output` back to every trainable leaf.

    `seed` defaults to ones of the output's shape (i.e. d(output)/d(output)).
    """
    if seed is None:
        seed = np.ones_like(output.data)
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != output.data.shape:
            raise ShapeError(f"seed shape {seed.shape} != output shape {output.data.shape}")

    order = []
    visited = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.needs_grad:
            continue
        visited.add(id(node))
        if node.op not in _SUPPORTED_OPS:
            raise UnsupportedOpError(f"op {node.op!r} is not part of the tape vocabulary")
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))

    if not output.needs_grad:
        return
    output._accumulate(seed)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class DenseLayer:
    """Fully connected layer with weight stored out x in."""

    def __init__(self, weight, bias):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
            raise ShapeError(
                f"inconsistent layer shapes: weight {weight.shape}, bias {bias.shape}"
            )
        self.weight = parameter(weight)
        self.bias = parameter(bias)

    @classmethod
    def init(cls, in_dim, out_dim, rng):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weight = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(weight, np.zeros(out_dim))

    @property
    def in_dim(self):
        return self.weight.data.shape[1]

    @property
    def out_dim(self):
        return self.weight.data.shape[0]

    def apply(self, x):
        """x (N x in) -> x @ W^T + b (N x out), recorded on the tape."""
        return add_bias(matmul(x, self.weight, tb=True), self.bias)


def sgd_step(params, grads, velocities, lr, momentum):
    """One SGD-with-momentum update, in place.

    v <- momentum * v + grad; param <- param - lr * v.
    """
    if not (0.0 <= momentum < 1.0):
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    if len(params) != len(grads) or len(params) != len(velocities):
        raise ShapeError("params, grads and velocities must align")
    for p, g, v in zip(params, grads, velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"update shape mismatch: {p.shape} vs {g.shape}")
        v *= momentum
        v += g
        p -= lr * v


class SGD:
    """Momentum SGD over a fixed list of parameter tensors."""

    def __init__(self, params, lr, momentum=0.0):
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        sgd_step([p.data for p in self.params], grads, self.velocities, self.lr, self.momentum)
