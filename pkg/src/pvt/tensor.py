"""
Dense tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array. Every differentiable operation returns a new
tensor that remembers its parents and a closure mapping the output gradient to
parent gradients. `backward` sorts the graph topologically (the "tape") and
replays those closures in reverse.

All arrays are row-major; reshapes are views of that order.
"""

from __future__ import annotations

import contextlib
import dataclasses
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import NumericalError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True
_debug_finite = False
_mac_counters: list["MacCounter"] = []
_mac_labels: list[str] = []


def _as_float_array(data: ArrayLike, dtype=None) -> np.ndarray:
    if dtype is not None:
        dtype = np.dtype(dtype)
        if dtype not in (np.float32, np.float64):
            raise TypeError(f"unsupported precision {dtype}; use float32 or float64")
        return np.array(data, dtype=dtype)
    arr = np.array(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """N-dimensional float32/float64 array that can take part in autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_consumed")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, *, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = "leaf"
        self._consumed = False
        if _debug_finite:
            check_finite(self.data, "leaf")

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._consumed = False
        out._op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        if _debug_finite:
            check_finite(data, op)
        return out

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}, op={self._op})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator overloads ----------------------------------------------

    def _wrap(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return add(self, self._wrap(other))

    def __radd__(self, other):
        return add(self._wrap(other), self)

    def __sub__(self, other):
        return sub(self, self._wrap(other))

    def __rsub__(self, other):
        return sub(self._wrap(other), self)

    def __mul__(self, other):
        return mul(self, self._wrap(other))

    def __rmul__(self, other):
        return mul(self._wrap(other), self)

    def __truediv__(self, other):
        return div(self, self._wrap(other))

    def __rtruediv__(self, other):
        return div(self._wrap(other), self)

    def __neg__(self):
        return mul(self, self._wrap(-1.0))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, self._wrap(other))

    def __getitem__(self, index):
        return getitem(self, index)

    # -- method aliases ---------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Optional[Sequence[int]] = None) -> "Tensor":
        return transpose(self, axes)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, axes)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def var(self, axis=None, keepdims: bool = False) -> "Tensor":
        return var(self, axis, keepdims)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def backward(self, inputs: Optional[Sequence["Tensor"]] = None) -> None:
        backward(self, inputs)


def tensor(data: ArrayLike, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, name: str = "custom") -> Tensor:
    """Register a user-defined differentiable op.

    `backward_fn` receives the output gradient and returns one gradient array
    (or None) per parent.
    """
    return Tensor._make(np.asarray(data), parents, backward_fn, name)


# -- grad mode / debug ---------------------------------------------------


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def detect_nonfinite() -> Iterator[None]:
    """Raise NumericalError as soon as any op produces NaN or Inf."""
    global _debug_finite
    prev, _debug_finite = _debug_finite, True
    try:
        yield
    finally:
        _debug_finite = prev


def check_finite(arr: np.ndarray, where: str = "") -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced by {where or 'tensor'}")


# -- MAC instrumentation -------------------------------------------------


@dataclasses.dataclass
class MacCounter:
    """Scalar multiply-accumulate count of every forward matmul in scope."""

    macs: int = 0
    calls: int = 0
    by_label: dict = dataclasses.field(default_factory=dict)

    def record(self, macs: int) -> None:
        self.macs += macs
        self.calls += 1
        label = _mac_labels[-1] if _mac_labels else "unlabeled"
        self.by_label[label] = self.by_label.get(label, 0) + macs


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    counter = MacCounter()
    _mac_counters.append(counter)
    try:
        yield counter
    finally:
        _mac_counters.remove(counter)


@contextlib.contextmanager
def mac_label(label: str) -> Iterator[None]:
    """Attribute matmuls issued inside the block to `label`."""
    _mac_labels.append(label)
    try:
        yield
    finally:
        _mac_labels.pop()


# -- broadcasting helpers ------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# -- elementwise ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), bw, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "div")

    def bw(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * a.data / b.data, b.shape)

    return Tensor._make(a.data / b.data, (a, b), bw, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return Tensor._make(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),), "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = x.data * cdf

    def bw(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return Tensor._make(out.astype(x.dtype, copy=False), (x,), bw, "gelu")


# -- reductions ----------------------------------------------------------


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    out = []
    for ax in axis:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(out)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._make(np.asarray(out), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / count)


def var(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Population variance (divides by the element count)."""
    mu = mean(a, axis, keepdims=True)
    centered = a - mu
    return mean(centered * centered, axis, keepdims)


# -- shape ---------------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    known = int(np.prod([s for s in shape if s != -1])) if shape else 1
    if shape.count(-1) > 1 or (-1 not in shape and known != a.size) or (
        -1 in shape and (known == 0 or a.size % known)
    ):
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} elements) to {shape}")
    src = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)) or len(axes) != a.ndim:
        raise ShapeError(f"axes {axes} are not a permutation of the {a.ndim} axes of {a.shape}")
    inverse = tuple(np.argsort([ax % a.ndim for ax in axes]))
    return Tensor._make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    ndim = tensors[0].ndim
    ax = _norm_axes(axis, ndim)[0]
    for t in tensors[1:]:
        if t.ndim != ndim:
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
        for i in range(ndim):
            if i != ax and t.shape[i] != tensors[0].shape[i]:
                raise ShapeError(f"concat: axis {i} differs ({tensors[0].shape[i]} vs {t.shape[i]})")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._make(np.array(out), (a,), bw, "getitem")


def take_slice(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ax = _norm_axes(axis, a.ndim)[0]
    if not 0 <= start <= stop <= a.shape[ax]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {ax} of size {a.shape[ax]}")
    index = tuple([slice(None)] * ax + [slice(start, stop)])
    return getitem(a, index)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} to {shape}") from None
    src = a.shape
    return Tensor._make(out, (a,), lambda g: (_unbroadcast(g, src),), "broadcast")


def space_to_depth(x: Tensor, block: int) -> Tensor:
    """(..., h, w, c) grid -> (..., h/b * w/b, b*b*c) tokens.

    Token t is the b x b block at row-major block position t, flattened in
    (row, col, channel) order.
    """
    *lead, h, w, c = x.shape
    if h % block:
        raise ShapeError(f"block size {block} does not divide height {h}")
    if w % block:
        raise ShapeError(f"block size {block} does not divide width {w}")
    nl = len(lead)
    t = x.reshape(*lead, h // block, block, w // block, block, c)
    axes = list(range(nl)) + [nl, nl + 2, nl + 1, nl + 3, nl + 4]
    t = t.transpose(axes)
    return t.reshape(*lead, (h // block) * (w // block), block * block * c)


# -- linear algebra ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: axis -1 of {a.shape} is {a.shape[-1]}, "
            f"axis -2 of {b.shape} is {b.shape[-2]}"
        )
    try:
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch axes {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None
    out = np.matmul(a.data, b.data)
    if _mac_counters:
        macs = int(np.prod(batch, dtype=np.int64)) * a.shape[-2] * a.shape[-1] * b.shape[-1]
        for counter in _mac_counters:
            counter.record(macs)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._make(out, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    if x.ndim == 1:
        return linear(x.reshape(1, -1), weight, bias).reshape(-1)
    out = matmul(x, weight)
    return out + bias if bias is not None else out


# -- normalization & activations ---------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axes(axis, x.ndim)[0]
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=ax, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return Tensor._make(out, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axes(axis, x.ndim)[0]
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=ax, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=ax, keepdims=True),)

    return Tensor._make(out, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, gamma: Optional[Tensor], beta: Optional[Tensor], eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then apply the affine map gamma, beta."""
    c = x.shape[-1]
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p is not None and p.shape != (c,):
            raise ShapeError(f"layer_norm: {name} shape {p.shape} does not match last axis {c}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = mean(x, -1, keepdims=True)
    centered = x - mu
    variance = mean(centered * centered, -1, keepdims=True)
    y = centered * power(variance + eps, -0.5)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood; class axis last, targets are integer labels."""
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    flat = log_softmax(logits, -1).reshape(-1, logits.shape[-1])
    picked = flat[np.arange(flat.shape[0]), targets.reshape(-1)]
    return -picked.mean()


# -- resize --------------------------------------------------------------


def _interp_matrix(src: int, dst: int) -> np.ndarray:
    """Align-corners linear interpolation weights, shape (dst, src)."""
    m = np.zeros((dst, src))
    if dst == 1 or src == 1:
        pos = np.zeros(dst)
    else:
        pos = np.arange(dst) * ((src - 1) / (dst - 1))
    lo = np.minimum(np.floor(pos).astype(int), src - 1)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    rows = np.arange(dst)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def bilinear_resize_grid(x: Tensor, new_h: int, new_w: int) -> Tensor:
    """Resize (..., h, w, c) to (..., new_h, new_w, c), align-corners convention."""
    if x.ndim < 3:
        raise ShapeError(f"bilinear_resize_grid expects (..., h, w, c), got {x.shape}")
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"target size must be positive, got {new_h}x{new_w}")
    h, w = x.shape[-3], x.shape[-2]
    if (h, w) == (new_h, new_w):
        return x
    mh = _interp_matrix(h, new_h).astype(x.dtype)
    mw = _interp_matrix(w, new_w).astype(x.dtype)
    out = np.einsum("ih,...hwc,jw->...ijc", mh, x.data, mw)

    def bw(g):
        return (np.einsum("ih,...ijc,jw->...hwc", mh, g, mw),)

    return Tensor._make(out, (x,), bw, "bilinear_resize")


# -- backward ------------------------------------------------------------


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from `root` through differentiable edges, inputs first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, inputs: Optional[Sequence[Tensor]] = None) -> None:
    """Accumulate d(loss)/d(leaf) into `.grad` of every requires_grad leaf.

    Tensors listed in `inputs` always end up with a gradient array, zero if
    the loss does not depend on them. The graph is released afterwards, so a
    second call on the same loss raises.
    """
    if loss._consumed:
        raise RuntimeError("backward already ran through this graph; recompute the loss first")
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not require grad (detached or built under no_grad)")
    if inputs is not None:
        for t in inputs:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    order = topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.astype(node.dtype, copy=False) if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in order:
        node._consumed = True
        if node._backward is not None:
            node._parents = ()
            node._backward = None
            node.requires_grad = False


# -- parameter containers ------------------------------------------------


def named_tensors(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Walk dataclasses, lists and dicts, yielding (dotted name, Tensor)."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif obj is None:
        return
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_tensors(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}.{i}" if prefix else str(i))
    elif isinstance(obj, dict):
        for k in obj:
            yield from named_tensors(obj[k], f"{prefix}.{k}" if prefix else str(k))


def parameters(obj) -> list[Tensor]:
    return [t for _, t in named_tensors(obj)]
