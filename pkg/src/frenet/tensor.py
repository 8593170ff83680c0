"""Dense float tensors with reverse-mode differentiation.

Values are immutable from the caller's perspective: every operation returns a
fresh Tensor and records a backward closure when any input participates in
gradient tracking. The tape is the implicit graph of those closures; it lives
only for one forward/backward pass and is never shared between threads.

The production dtype is float32. Operations follow the dtype of their inputs,
which lets the gradient checker rerun the same graph in float64 where central
finite differences are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf


class ConfigurationError(ValueError):
    """Raised when shapes, sizes, or config fields violate an operation's contract."""


class EvaluationError(RuntimeError):
    """Raised when a numeric evaluation produces unusable results (NaN/Inf)."""


class Tensor:
    """Dense rank-N array of 32-bit floats (64-bit inside the gradient checker).

    ``data`` is row-major with length equal to the product of ``shape``.
    ``grad`` is filled by ``backward()`` for tensors that require gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype})"

    # Small operator sugar; the named functions below are the real API.
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output.

        Accumulates ``grad`` on every tensor in the tape that requires
        gradients. Uses an iterative topological order so deep networks do not
        hit the recursion limit.
        """
        if self.data.ndim != 0:
            raise EvaluationError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A learnable Tensor with a unique dotted-path name."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={tuple(self.shape)})"


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a 2-D convolution layer."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride", "groups"):
            if getattr(self, field) < 1:
                raise ConfigurationError(f"ConvSpec.{field} must be positive, got {getattr(self, field)}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigurationError(
                f"channels must divide by groups: in={self.in_channels} out={self.out_channels} "
                f"groups={self.groups}"
            )

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result; the backward closure is kept only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / reduction primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _node(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(out, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * s

    def bw(g):
        _accumulate(a, g * s)

    return _node(out, (a,), bw)


def abs_(a: Tensor) -> Tensor:
    """Elementwise |x|; the subgradient at exact zero is taken as 0."""
    out = np.abs(a.data)

    def bw(g):
        _accumulate(a, g * np.sign(a.data))

    return _node(out, (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    out = a.data.mean(dtype=np.float64).astype(a.dtype)
    n = a.data.size

    def bw(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape).astype(a.dtype))

    return _node(out, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out, (a, b), bw)


def transpose2d(a: Tensor) -> Tensor:
    out = a.data.T.copy()

    def bw(g):
        _accumulate(a, g.T)

    return _node(out, (a,), bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _node(out, (a,), bw)


def concat_channels(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[lo:hi])

    return _node(out, parts, bw)


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[start:stop]

    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[start:stop] = g
        _accumulate(a, full)

    return _node(out, (a,), bw)


def roll2d(a: Tensor, shift_h: int, shift_w: int) -> Tensor:
    """Circular shift along the last two axes."""
    out = np.roll(a.data, (shift_h, shift_w), axis=(-2, -1))

    def bw(g):
        _accumulate(a, np.roll(g, (-shift_h, -shift_w), axis=(-2, -1)))

    return _node(out, (a,), bw)


# ---------------------------------------------------------------------------
# neural primitives


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Grouped 2-D cross-correlation.

    Odd kernels get zero padding (k-1)/2 so spatial size maps H -> H/stride;
    even kernels are unpadded (the 2x2/stride-2 downsampling case).
    Accumulation runs in float64 and the result is cast back to the input dtype.
    """
    if x.data.ndim != 3:
        raise ConfigurationError(f"conv2d expects CxHxW input, got shape {x.shape}")
    c_in, h, w = x.shape
    if c_in != spec.in_channels:
        raise ConfigurationError(f"input has {c_in} channels, spec expects {spec.in_channels}")
    if tuple(weight.shape) != spec.weight_shape:
        raise ConfigurationError(
            f"weight shape {tuple(weight.shape)} does not match spec {spec.weight_shape}"
        )
    if bias is not None and tuple(bias.shape) != (spec.out_channels,):
        raise ConfigurationError(f"bias shape {tuple(bias.shape)} != ({spec.out_channels},)")
    if h % spec.stride or w % spec.stride:
        raise ConfigurationError(f"spatial dims {h}x{w} not divisible by stride {spec.stride}")

    kh, kw, s, grp = spec.kernel_h, spec.kernel_w, spec.stride, spec.groups
    pad_h, pad_w = (kh - 1) // 2, (kw - 1) // 2
    ci_g = spec.in_channels // grp
    co_g = spec.out_channels // grp

    xp = np.pad(x.data, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
    h_out, w_out = windows.shape[1], windows.shape[2]
    xv = windows.reshape(grp, ci_g, h_out, w_out, kh, kw)
    wv = weight.data.reshape(grp, co_g, ci_g, kh, kw)

    out = np.einsum("gihwuv,goiuv->gohw", xv, wv, dtype=np.float64, optimize=True)
    out_dtype = np.result_type(x.data, weight.data)
    out = out.reshape(spec.out_channels, h_out, w_out).astype(out_dtype)
    if bias is not None:
        out = out + bias.data[:, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gv = g.reshape(grp, co_g, h_out, w_out)
        if weight.requires_grad:
            dw = np.einsum("gihwuv,gohw->goiuv", xv, gv, dtype=np.float64, optimize=True)
            _accumulate(weight, dw.reshape(weight.shape).astype(g.dtype))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for u in range(kh):
                for v in range(kw):
                    patch = np.einsum("goi,gohw->gihw", wv[:, :, :, u, v], gv, optimize=True)
                    dxp[:, u : u + s * h_out : s, v : v + s * w_out : s] += patch.reshape(
                        c_in, h_out, w_out
                    )
            _accumulate(x, dxp[:, pad_h : pad_h + h, pad_w : pad_w + w])
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(1, 2)))

    return _node(out, parents, bw)


def layer_norm_channels(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each spatial position across channels (biased variance), then affine."""
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ConfigurationError(
            f"gamma/beta must have length {c}, got {tuple(gamma.shape)}/{tuple(beta.shape)}"
        )
    mu = x.data.mean(axis=0)
    centered = x.data - mu
    var = np.square(centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def bw(g):
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(1, 2)))
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(1, 2)))
        if x.requires_grad:
            dxhat = g * gamma.data[:, None, None]
            mean_dxhat = dxhat.mean(axis=0)
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=0)
            dx = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
            _accumulate(x, dx)

    return _node(out, (x, gamma, beta), bw)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian error linear unit x * Phi(x) (erf form, no tanh approximation)."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def bw(g):
        pdf = np.exp(-0.5 * np.square(x.data)) * _INV_SQRT_2PI
        _accumulate(x, g * (cdf + x.data * pdf))

    return _node(out.astype(x.dtype), (x,), bw)


def simple_gate(x: Tensor) -> Tensor:
    """Split channels in half and multiply the halves elementwise."""
    c = x.shape[0]
    if c % 2:
        raise ConfigurationError(f"simple_gate needs an even channel count, got {c}")
    half = c // 2
    first, second = x.data[:half], x.data[half:]
    out = first * second

    def bw(g):
        _accumulate(x, np.concatenate([g * second, g * first], axis=0))

    return _node(out, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over all spatial positions, kept as Cx1x1."""
    _, h, w = x.shape
    out = x.data.mean(axis=(1, 2), keepdims=True, dtype=np.float64).astype(x.dtype)

    def bw(g):
        _accumulate(x, np.broadcast_to(g / (h * w), x.shape).astype(g.dtype))

    return _node(out, (x,), bw)


def depth_to_space(x: Tensor, factor: int = 2) -> Tensor:
    """Rearrange (r*r*C)xHxW into Cx(rH)x(rW); channel blocks fill each rxr cell row-major."""
    c_in, h, w = x.shape
    r = factor
    if c_in % (r * r):
        raise ConfigurationError(f"depth_to_space needs channels divisible by {r * r}, got {c_in}")
    c_out = c_in // (r * r)
    out = (
        x.data.reshape(c_out, r, r, h, w)
        .transpose(0, 3, 1, 4, 2)
        .reshape(c_out, h * r, w * r)
    )

    def bw(g):
        dg = (
            g.reshape(c_out, h, r, w, r)
            .transpose(0, 2, 4, 1, 3)
            .reshape(c_in, h, w)
        )
        _accumulate(x, dg)

    return _node(np.ascontiguousarray(out), (x,), bw)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0
