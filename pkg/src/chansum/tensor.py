"""Minimal reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps a contiguous float array together with an optional
gradient buffer and a backpointer to the operation that produced it.
Calling :meth:`Tensor.backward` on a scalar result walks the recorded
graph in reverse topological order and accumulates exact analytic
gradients into every reachable tensor with ``requires_grad=True``.

The operation set is deliberately small: exactly what a convolutional
attention summarizer needs (dense algebra, dilated 1-D convolution,
temporal max pooling, fractionally-strided deconvolution, stable softmax
and a clamped binary cross entropy). Everything runs on the CPU in either
float64 (gradient-check mode) or float32 (training mode); binary
operations require both operands to share one dtype so precision never
changes silently mid-graph.

Tensors are value-semantic: no global state is involved, and one
forward/backward graph is only ever touched by the thread that built it.
"""

from __future__ import annotations

import numpy as np

BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {' and '.join(str(tuple(s)) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tensor:
    """N-dimensional float array with reverse-mode gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, gradient=None):
        """Backpropagate from this tensor through the recorded graph.

        ``gradient`` defaults to ones for a scalar output; non-scalar
        outputs need an explicit seed of the same shape.
        """
        if gradient is None:
            if self.data.size != 1:
                raise ValueError("backward() on a non-scalar tensor needs an explicit gradient")
            gradient = np.ones_like(self.data)
        gradient = np.asarray(gradient, dtype=self.data.dtype)
        if gradient.shape != self.data.shape:
            raise ShapeError("backward", gradient.shape, self.data.shape)

        order = []
        seen = set()
        stack = [(self, False)]
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

        self.accumulate_grad(gradient)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; python scalars are allowed on either side
    def __add__(self, other):
        return add(self, _wrap_like(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap_like(other, self), -1.0))

    def __rsub__(self, other):
        return add(_wrap_like(other, self), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap_like(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.dtype))


def _check_dtypes(op: str, *tensors: Tensor):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


_grad_enabled = [True]


class no_grad:
    """Context manager that suspends graph recording (inference mode)."""

    def __enter__(self):
        _grad_enabled.append(False)
        return self

    def __exit__(self, *exc):
        _grad_enabled.pop()
        return False


def _result(data: np.ndarray, parents, backward, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled[-1] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("add", a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(g, b.shape))

    return _result(data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    _check_dtypes("mul", a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None

    def backward(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), backward, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = a.dtype.type(s)

    def backward(g):
        a.accumulate_grad(g * s)

    return _result(a.data * s, (a,), backward, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b`` where b is 2-D and a is (...,k)-shaped."""
    _check_dtypes("matmul", a, b)
    if a.data.ndim < 2 or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    data = np.matmul(a.data, b.data)

    def backward(g):
        a.accumulate_grad(np.matmul(g, b.data.T))
        b.accumulate_grad(np.matmul(a.data.reshape(-1, a.shape[-1]).T, g.reshape(-1, b.shape[1])))

    return _result(data, (a, b), backward, "matmul")


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` with w stored input-major, shape (d_in, d_out)."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, b)
    return y


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a.accumulate_grad(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: empty input list")
    _check_dtypes("concat", *tensors)
    base = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(base) or any(
            i != axis and t.shape[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError("concat", base, t.shape, detail=f"axis={axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + n)
            t.accumulate_grad(g[tuple(idx)])
            offset += n

    return _result(data, tensors, backward, "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; the inverse of concat."""
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError("narrow", a.shape, detail=f"axis={axis} start={start} length={length}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a.accumulate_grad(full)

    return _result(a.data[idx].copy(), (a,), backward, "narrow")


def sum_along(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.shape).copy())

    return _result(data, (a,), backward, "sum")


def mean_along(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.shape) / n)

    return _result(data, (a,), backward, "mean")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return _result(data, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    data = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    )

    def backward(g):
        a.accumulate_grad(g * data * (1.0 - data))

    return _result(data, (a,), backward, "sigmoid")


def softmax(a: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    if a.shape[axis] < 1:
        raise ShapeError("softmax", a.shape, detail=f"axis {axis} is empty")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(data * (g - dot))

    return _result(data, (a,), backward, "softmax")


# ---------------------------------------------------------------------------
# temporal (1-D) structured ops; inputs are (time, channels)


def conv1d_dilated(x: Tensor, f: Tensor, dilation: int = 1, padding: str = "same") -> Tensor:
    """Dilated 1-D convolution with zero "same" padding.

    ``x`` is (T, C_in), ``f`` is (taps, C_in, C_out) with an odd number of
    taps 2k+1. Output position i sums f[t] applied to x[i + dilation*(t-k)],
    out-of-range positions contributing zero, so the output is again length T.
    """
    _check_dtypes("conv1d_dilated", x, f)
    if x.data.ndim != 2 or f.data.ndim != 3:
        raise ShapeError("conv1d_dilated", x.shape, f.shape)
    taps = f.shape[0]
    if taps % 2 == 0:
        raise ShapeError("conv1d_dilated", f.shape, detail="filter length must be odd")
    if f.shape[1] != x.shape[1]:
        raise ShapeError("conv1d_dilated", x.shape, f.shape, detail="channel mismatch")
    if dilation < 1:
        raise ValueError(f"conv1d_dilated: dilation must be >= 1, got {dilation}")
    if padding != "same":
        raise ValueError(f"conv1d_dilated: unsupported padding mode {padding!r}")

    T = x.shape[0]
    k = taps // 2
    out = np.zeros((T, f.shape[2]), dtype=x.dtype)
    for t in range(taps):
        off = dilation * (t - k)
        lo, hi = max(0, -off), min(T, T - off)
        if lo < hi:
            out[lo:hi] += x.data[lo + off : hi + off] @ f.data[t]

    def backward(g):
        gx = np.zeros_like(x.data)
        gf = np.zeros_like(f.data)
        for t in range(taps):
            off = dilation * (t - k)
            lo, hi = max(0, -off), min(T, T - off)
            if lo < hi:
                gx[lo + off : hi + off] += g[lo:hi] @ f.data[t].T
                gf[t] += x.data[lo + off : hi + off].T @ g[lo:hi]
        x.accumulate_grad(gx)
        f.accumulate_grad(gf)

    return _result(out, (x, f), backward, "conv1d_dilated")


def max_pool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping temporal max pooling; a final partial window is pooled as-is.

    The backward pass routes each output gradient to the first maximal
    position of its window, which keeps tie handling deterministic.
    """
    if x.data.ndim != 2:
        raise ShapeError("max_pool1d", x.shape)
    if window < 1:
        raise ValueError(f"max_pool1d: window must be >= 1, got {window}")
    T, C = x.shape
    n_out = -(-T // window)
    out = np.empty((n_out, C), dtype=x.dtype)
    argmax = np.empty((n_out, C), dtype=np.intp)
    for i in range(n_out):
        chunk = x.data[i * window : min((i + 1) * window, T)]
        idx = chunk.argmax(axis=0)
        argmax[i] = idx + i * window
        out[i] = chunk[idx, np.arange(C)]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (argmax, np.arange(C)[None, :]), g)
        x.accumulate_grad(gx)

    return _result(out, (x,), backward, "max_pool1d")


def transposed_conv1d(x: Tensor, f: Tensor, stride: int, target_length: int) -> Tensor:
    """Fractionally-strided 1-D convolution mapping (T, C_in) -> (target_length, C_out).

    The full output has length (T-1)*stride + taps and is cropped
    symmetrically to ``target_length``; when the crop is odd the extra
    element is dropped at the end. With stride 1 and a channel-transposed
    filter this is the exact adjoint of :func:`conv1d_dilated`.
    """
    _check_dtypes("transposed_conv1d", x, f)
    if x.data.ndim != 2 or f.data.ndim != 3 or f.shape[1] != x.shape[1]:
        raise ShapeError("transposed_conv1d", x.shape, f.shape)
    if stride < 1:
        raise ValueError(f"transposed_conv1d: stride must be >= 1, got {stride}")
    T = x.shape[0]
    taps = f.shape[0]
    full = (T - 1) * stride + taps
    if target_length < 1 or target_length > full:
        raise ShapeError(
            "transposed_conv1d",
            x.shape,
            f.shape,
            detail=f"target_length {target_length} not producible (full length {full})",
        )
    crop = full - target_length
    left = crop // 2

    out_full = np.zeros((full, f.shape[2]), dtype=x.dtype)
    for t in range(taps):
        out_full[t : t + T * stride : stride] += x.data @ f.data[t]

    def backward(g):
        g_full = np.zeros((full, g.shape[1]), dtype=g.dtype)
        g_full[left : left + target_length] = g
        gx = np.zeros_like(x.data)
        gf = np.zeros_like(f.data)
        for t in range(taps):
            rows = g_full[t : t + T * stride : stride]
            gx += rows @ f.data[t].T
            gf[t] += x.data.T @ rows
        x.accumulate_grad(gx)
        f.accumulate_grad(gf)

    return _result(out_full[left : left + target_length].copy(), (x, f), backward, "transposed_conv1d")


def bce_loss(scores: Tensor, labels) -> Tensor:
    """Mean binary cross entropy, the minimized (non-negative) form.

    ``labels`` holds constants in [0, 1] (a plain array, or a Tensor
    whose data is used without gradient). Scores are clamped to
    [1e-7, 1 - 1e-7] before the logs; gradients do not flow through
    clamped positions.
    """
    if isinstance(labels, Tensor):
        labels = labels.data
    y = np.asarray(labels, dtype=scores.dtype)
    if y.shape != scores.shape:
        raise ShapeError("bce_loss", scores.shape, y.shape)
    lo, hi = BCE_CLAMP, 1.0 - BCE_CLAMP
    s = np.clip(scores.data, lo, hi)
    n = s.size
    data = np.asarray(-(y * np.log(s) + (1.0 - y) * np.log1p(-s)).sum() / n, dtype=scores.dtype)

    def backward(g):
        inside = (scores.data >= lo) & (scores.data <= hi)
        gs = np.where(inside, -(y / s - (1.0 - y) / (1.0 - s)) / n, 0.0) * g
        scores.accumulate_grad(gs.astype(scores.dtype, copy=False))

    return _result(data, (scores,), backward, "bce_loss")
