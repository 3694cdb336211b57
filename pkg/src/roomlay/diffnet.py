"""Minimal reverse-mode autodiff on numpy arrays.

Covers exactly what the layout networks need: dense and 3x3/stride-2
convolution layers, ReLU/Sigmoid/[0,1]-clamp activations, reductions, Adam,
and finite-difference gradient verification.  Data is float64 throughout;
forward passes are deterministic and raise on non-finite values.

Tensors build a tape of parent links; ``Tensor.backward()`` walks it in
reverse topological order accumulating vector-Jacobian products.  Kinked ops
(ReLU, clamp) use the 0 subgradient at their kinks.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """A forward pass produced NaN or Inf."""


_check_finite = True


def set_finite_checks(enabled: bool):
    """Toggle per-op NaN/Inf detection (on by default)."""
    global _check_finite
    _check_finite = bool(enabled)


class _KinkTrace:
    """Records, per kinked op in execution order, the activation regions and
    the smallest input distance to a kink."""

    def __init__(self):
        self.regions: list[np.ndarray] = []
        self.margins: list[float] = []

    def update(self, regions: np.ndarray, margins: np.ndarray):
        self.regions.append(regions)
        self.margins.append(float(margins.min()) if margins.size else np.inf)

    def crosses(self, other: "_KinkTrace") -> bool:
        """True when any activation region differs (a kink sits between the
        two traced forward passes)."""
        if len(self.regions) != len(other.regions):
            return True
        return any(not np.array_equal(a, b)
                   for a, b in zip(self.regions, other.regions))

    def near_kink_and_influenced(self, other: "_KinkTrace", tol: float) -> bool:
        """True when a kink-adjacent value (margin < tol) moved between the
        passes; parked values untouched by the perturbation do not count."""
        return any(min(ma, mb) < tol and ma != mb
                   for ma, mb in zip(self.margins, other.margins))


_kink_trace: _KinkTrace | None = None


class trace_kinks:
    """Context manager enabling kink-margin tracking during forward passes."""

    def __enter__(self) -> _KinkTrace:
        global _kink_trace
        self._prev = _kink_trace
        _kink_trace = _KinkTrace()
        return _kink_trace

    def __exit__(self, *exc):
        global _kink_trace
        _kink_trace = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if _check_finite and not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values out of op {_op!r}")
        self.data = arr
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r})"

    def backward(self):
        """Reverse-accumulate gradients from this (scalar) tensor to all leaves."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # -- operator sugar (constants are lifted) --
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Named trainable tensor."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str, trainable: bool = True):
        super().__init__(data, _op=f"param:{name}")
        self.name = name
        self.trainable = trainable


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, _op="const")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum grad over axes that were broadcast up from ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    return Tensor(out_data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product with broadcast batch dimensions: (..., n, k) @ (..., k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} incompatible") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a.accumulate(_unbroadcast(ga, a.shape))
        b.accumulate(_unbroadcast(gb, b.shape))

    return Tensor(out_data, (a, b), backward, "matmul")


def relu(x) -> Tensor:
    x = as_tensor(x)
    if _kink_trace is not None:
        _kink_trace.update((x.data > 0).astype(np.uint8), np.abs(x.data))
    mask = x.data > 0

    def backward(g):
        x.accumulate(g * mask)

    return Tensor(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    z = x.data
    out_data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    # keep the output strictly inside (0, 1) even for saturating inputs
    out_data = np.clip(out_data, 1e-300, 1.0 - 1e-16)

    def backward(g):
        x.accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, (x,), backward, "sigmoid")


def clamp01(x) -> Tensor:
    """min(max(x, 0), 1) with subgradient 0 outside (0, 1)."""
    x = as_tensor(x)
    if _kink_trace is not None:
        _kink_trace.update((x.data > 0).astype(np.uint8) + (x.data >= 1).astype(np.uint8),
                           np.minimum(np.abs(x.data), np.abs(x.data - 1.0)))
    mask = (x.data > 0) & (x.data < 1)

    def backward(g):
        x.accumulate(g * mask)

    return Tensor(np.clip(x.data, 0.0, 1.0), (x,), backward, "clamp01")


def one_minus(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x.accumulate(-g)

    return Tensor(1.0 - x.data, (x,), backward, "one_minus")


def absolute(x) -> Tensor:
    x = as_tensor(x)
    if _kink_trace is not None:
        _kink_trace.update((x.data > 0).astype(np.uint8) + (x.data >= 0).astype(np.uint8),
                           np.abs(x.data))
    sign = np.sign(x.data)

    def backward(g):
        x.accumulate(g * sign)

    return Tensor(np.abs(x.data), (x,), backward, "abs")


def sin(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x.accumulate(g * np.cos(x.data))

    return Tensor(np.sin(x.data), (x,), backward, "sin")


def cos(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x.accumulate(-g * np.sin(x.data))

    return Tensor(np.cos(x.data), (x,), backward, "cos")


def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            x.accumulate(np.broadcast_to(g, x.shape))
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape))

    return Tensor(out_data, (x,), backward, "sum")


def tmean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x.accumulate(g.reshape(x.shape))

    return Tensor(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)

    def backward(g):
        x.accumulate(g.transpose(inv))

    return Tensor(x.data.transpose(axes), (x,), backward, "transpose")


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    x = as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros(x.shape)
        full[index] = g
        x.accumulate(full)

    return Tensor(x.data[index], (x,), backward, "narrow")


def stack(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)
    ax = axis if axis >= 0 else out_data.ndim + axis

    def backward(g):
        for k, t in enumerate(tensors):
            t.accumulate(np.take(g, k, axis=ax))

    return Tensor(out_data, tuple(tensors), backward, "stack")


def conv2d(x, w, b, stride: int = 2) -> Tensor:
    """3x3 convolution with padding 1.  x: (B, C, H, W), w: (F, C, 3, 3), b: (F,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: expected x (B,C,H,W) and w (F,C,3,3), "
                         f"got {x.shape} and {w.shape}")
    bs, c, h, wd = x.shape
    f = w.shape[0]
    if w.shape[1] != c:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {w.shape[1]}")
    ho = (h + 2 - 3) // stride + 1
    wo = (wd + 2 - 3) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    # gather the 9 kernel taps as strided views: cols[(ki,kj)] has shape (B,C,Ho,Wo)
    cols = np.empty((bs, c, 3, 3, ho, wo))
    for ki in range(3):
        for kj in range(3):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + stride * ho:stride,
                                    kj:kj + stride * wo:stride]
    cols2 = cols.reshape(bs, c * 9, ho * wo)
    w2 = w.data.reshape(f, c * 9)
    out_data = np.matmul(w2, cols2).reshape(bs, f, ho, wo) + b.data.reshape(1, f, 1, 1)

    def backward(g):
        g2 = g.reshape(bs, f, ho * wo)
        b.accumulate(g2.sum(axis=(0, 2)))
        gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0)
        w.accumulate(gw.reshape(w.shape))
        gcols = np.matmul(w2.T, g2).reshape(bs, c, 3, 3, ho, wo)
        gxp = np.zeros_like(xp)
        for ki in range(3):
            for kj in range(3):
                gxp[:, :, ki:ki + stride * ho:stride,
                    kj:kj + stride * wo:stride] += gcols[:, :, ki, kj]
        x.accumulate(gxp[:, :, 1:1 + h, 1:1 + wd])

    return Tensor(out_data, (x, w, b), backward, "conv2d")


def global_avg_pool(x) -> Tensor:
    """(B, C, H, W) -> (B, C) mean over the spatial dimensions."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool expects (B,C,H,W), got {x.shape}")
    bs, c, h, w = x.shape

    def backward(g):
        x.accumulate(np.broadcast_to(g[:, :, None, None] / (h * w), x.shape))

    return Tensor(x.data.mean(axis=(2, 3)), (x,), backward, "gap")


def mse(pred, target) -> Tensor:
    """Mean of squared differences over all elements."""
    diff = add(pred, mul(as_tensor(target), -1.0))
    return tmean(mul(diff, diff))


def l1(pred, target) -> Tensor:
    """Mean of absolute differences over all elements."""
    return tmean(absolute(add(pred, mul(as_tensor(target), -1.0))))


# ---------------------------------------------------------------------------
# Layers


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = Parameter(glorot_uniform(rng, (n_in, n_out), n_in, n_out), f"{name}.w")
        self.b = Parameter(np.zeros(n_out), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def parameters(self):
        return [self.w, self.b]


class Conv:
    def __init__(self, name: str, c_in: int, c_out: int, rng: np.random.Generator,
                 stride: int = 2):
        self.stride = stride
        self.w = Parameter(glorot_uniform(rng, (c_out, c_in, 3, 3), c_in * 9, c_out * 9),
                           f"{name}.w")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride)

    def parameters(self):
        return [self.w, self.b]


def check_unique_names(params):
    names = [p.name for p in params]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ValueError(f"duplicate parameter names: {sorted(dupes)}")
    return params


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Standard Adam.  State is kept per parameter, in list order."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if getattr(p, "trainable", True)]
        check_unique_names(self.params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Gradient checking


class GradCheckEntry:
    def __init__(self, name, max_rel_err, checked, excluded):
        self.name = name
        self.max_rel_err = max_rel_err
        self.checked = checked
        self.excluded = excluded

    def passes(self, tol: float) -> bool:
        return self.checked == 0 or self.max_rel_err <= tol


class GradCheckReport:
    def __init__(self, entries, tol):
        self.entries = entries
        self.tol = tol

    @property
    def max_rel_err(self) -> float:
        errs = [e.max_rel_err for e in self.entries if e.checked]
        return max(errs) if errs else 0.0

    @property
    def ok(self) -> bool:
        return all(e.passes(self.tol) for e in self.entries)

    def lines(self):
        for e in self.entries:
            status = "ok" if e.passes(self.tol) else "FAIL"
            yield (f"{status:4s} {e.name:32s} max_rel_err={e.max_rel_err:.3e} "
                   f"checked={e.checked} excluded={e.excluded}")


def grad_check(loss_fn, params, h: float = 1e-5, tol: float = 1e-4,
               kink_tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the current parameter data on
    every call.  An element is excluded when its +-h perturbation either
    flips a ReLU/clamp/abs activation region (the difference quotient spans a
    kink) or moves a value that sits within ``kink_tol`` of a kink; finite
    differences are unreliable in both situations.  Kink-adjacent values the
    perturbation does not touch exclude nothing.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.array(p.grad) if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    entries = []
    for p, ag in zip(params, analytic):
        flat = p.data.ravel()
        max_err = 0.0
        checked = 0
        excluded = 0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            with trace_kinks() as t_plus:
                lp = float(loss_fn().data)
            flat[idx] = orig - h
            with trace_kinks() as t_minus:
                lm = float(loss_fn().data)
            flat[idx] = orig
            if t_plus.crosses(t_minus) or \
                    t_plus.near_kink_and_influenced(t_minus, kink_tol):
                excluded += 1
                continue
            fd = (lp - lm) / (2.0 * h)
            a = ag.ravel()[idx]
            denom = max(abs(a), abs(fd))
            err = 0.0 if denom < 1e-10 else abs(a - fd) / max(denom, 1e-6)
            max_err = max(max_err, err)
            checked += 1
        entries.append(GradCheckEntry(p.name, max_err, checked, excluded))
    return GradCheckReport(entries, tol)
