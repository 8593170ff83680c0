"""Adaptive frequency positional modulation.

The centered spectrum is tiled into a grid of non-overlapping patches. Each
patch's normalized center distance drives two tiny two-layer generators that
emit a patch-shaped aggregation kernel and a scalar bias; the aggregated
per-channel value is projected by a 1x1 convolution into a modulation factor
that rescales the patch. Kernels and biases depend only on the patch's
spectral position, never on its content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConfigurationError,
    ConvSpec,
    Parameter,
    Tensor,
    _accumulate,
    _node,
    add,
    gelu,
    matmul,
    reshape,
    transpose2d,
)

KBG_HIDDEN = 16


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """Exact tiling of an HxW map into rows x cols patches with center distances."""

    rows: int
    cols: int
    patch_h: int
    patch_w: int
    distances: np.ndarray  # (rows, cols) float32 in [0, 1]

    @property
    def height(self) -> int:
        return self.rows * self.patch_h

    @property
    def width(self) -> int:
        return self.cols * self.patch_w


def make_patch_grid(h: int, w: int, target: int = 8) -> PatchGrid:
    """Largest power-of-two grid g x g with g <= target that tiles the map exactly.

    Small maps fall back to a coarser granularity (g bounded by the map size).
    The distance of patch (i, j) is the Euclidean distance from the patch
    center ((i+0.5)p_h, (j+0.5)p_w) to the map center (H/2, W/2), normalized by
    the center-to-corner distance so all values lie in [0, 1].
    """
    if h < 1 or w < 1 or target < 1:
        raise ConfigurationError(f"invalid grid request h={h} w={w} target={target}")
    g = 1
    while g * 2 <= target and h % (g * 2) == 0 and w % (g * 2) == 0:
        g *= 2
    p_h, p_w = h // g, w // g

    # Offsets use integer numerators (2i+1)*p - H so point-reflected patches
    # get bit-identical distances.
    dist = np.empty((g, g), dtype=np.float32)
    norm = math.sqrt(h * h + w * w)
    for i in range(g):
        dy = (2 * i + 1) * p_h - h
        for j in range(g):
            dx = (2 * j + 1) * p_w - w
            dist[i, j] = np.float32(math.sqrt(dy * dy + dx * dx) / norm)
    return PatchGrid(rows=g, cols=g, patch_h=p_h, patch_w=p_w, distances=dist)


class KernelBiasGenerator:
    """Two linear layers with a GELU in between, mapping a distance to out_dim values."""

    def __init__(self, prefix: str, rng: np.random.Generator, out_dim: int, hidden: int = KBG_HIDDEN):
        self.out_dim = out_dim
        self.hidden = hidden
        b1 = 1.0
        b2 = 1.0 / math.sqrt(hidden)
        self.w1 = Parameter(f"{prefix}.w1", rng.uniform(-b1, b1, size=(hidden, 1)).astype(np.float32))
        self.b1 = Parameter(f"{prefix}.b1", np.zeros(hidden, dtype=np.float32))
        self.w2 = Parameter(f"{prefix}.w2", rng.uniform(-b2, b2, size=(out_dim, hidden)).astype(np.float32))
        self.b2 = Parameter(f"{prefix}.b2", np.zeros(out_dim, dtype=np.float32))

    def params(self):
        yield from (self.w1, self.b1, self.w2, self.b2)

    def __call__(self, distances: np.ndarray) -> Tensor:
        """Evaluate the generator for a batch of distances; returns (n, out_dim)."""
        d = Tensor(np.asarray(distances, dtype=self.w1.dtype).reshape(-1, 1))
        hidden = gelu(add(matmul(d, transpose2d(self.w1)), self.b1))
        return add(matmul(hidden, transpose2d(self.w2)), self.b2)


def kbg_forward(kbg: KernelBiasGenerator, distance: float) -> Tensor:
    """Single-distance evaluation: w2 . gelu(w1 * d + b1) + b2 as a flat vector."""
    return reshape(kbg(np.array([distance])), (kbg.out_dim,))


def _check_tiling(x: Tensor, grid: PatchGrid) -> None:
    _, h, w = x.shape
    if grid.height != h or grid.width != w:
        raise ConfigurationError(
            f"grid {grid.rows}x{grid.cols} of {grid.patch_h}x{grid.patch_w} patches "
            f"tiles {grid.height}x{grid.width}, not {h}x{w}"
        )


def patch_weighted_sum(x: Tensor, kernels: Tensor, grid: PatchGrid) -> Tensor:
    """Per patch and channel, sum the patch weighted by its shared kernel.

    ``kernels`` is (rows*cols, patch_h*patch_w); the result is (rows*cols, C).
    """
    _check_tiling(x, grid)
    c = x.shape[0]
    m, n, ph, pw = grid.rows, grid.cols, grid.patch_h, grid.patch_w
    if tuple(kernels.shape) != (m * n, ph * pw):
        raise ConfigurationError(
            f"kernel stack shape {tuple(kernels.shape)} != ({m * n}, {ph * pw})"
        )
    patches = x.data.reshape(c, m, ph, n, pw)
    kview = kernels.data.reshape(m, n, ph, pw)
    out = np.einsum("cipjq,ijpq->ijc", patches, kview, optimize=True).reshape(m * n, c)

    def bw(g):
        gv = g.reshape(m, n, c)
        if kernels.requires_grad:
            dk = np.einsum("cipjq,ijc->ijpq", patches, gv, optimize=True)
            _accumulate(kernels, dk.reshape(m * n, ph * pw))
        if x.requires_grad:
            dx = np.einsum("ijpq,ijc->cipjq", kview, gv, optimize=True)
            _accumulate(x, dx.reshape(c, m * ph, n * pw))

    return _node(np.ascontiguousarray(out), (x, kernels), bw)


def patch_scale(x: Tensor, factors: Tensor, grid: PatchGrid) -> Tensor:
    """Multiply each patch by its per-channel modulation factor (rows*cols, C)."""
    _check_tiling(x, grid)
    c = x.shape[0]
    m, n, ph, pw = grid.rows, grid.cols, grid.patch_h, grid.patch_w
    if tuple(factors.shape) != (m * n, c):
        raise ConfigurationError(f"factor shape {tuple(factors.shape)} != ({m * n}, {c})")
    patches = x.data.reshape(c, m, ph, n, pw)
    fview = factors.data.reshape(m, n, c).transpose(2, 0, 1)[:, :, None, :, None]
    out = (patches * fview).reshape(c, m * ph, n * pw)

    def bw(g):
        gp = g.reshape(c, m, ph, n, pw)
        if factors.requires_grad:
            df = np.einsum("cipjq,cipjq->ijc", gp, patches, optimize=True)
            _accumulate(factors, df.reshape(m * n, c))
        if x.requires_grad:
            _accumulate(x, (gp * fview).reshape(c, m * ph, n * pw))

    return _node(np.ascontiguousarray(out), (x, factors), bw)


class Afpm:
    """Position-conditioned spectral patch modulation (the adaptive local branch).

    ``channels`` is the feature count of the map being modulated; the kernel
    generator's output size is fixed by the patch shape, so one Afpm instance
    serves exactly one map geometry. With ``adaptive=False`` the generators are
    not built and the aggregation degrades to fixed per-patch average pooling.
    """

    def __init__(self, prefix: str, rng: np.random.Generator, channels: int,
                 grid: PatchGrid, adaptive: bool = True):
        self.channels = channels
        self.grid = grid
        self.adaptive = adaptive
        patch_len = grid.patch_h * grid.patch_w
        self.kernel_kbg = None
        self.bias_kbg = None
        if adaptive:
            self.kernel_kbg = KernelBiasGenerator(f"{prefix}.kernel_kbg", rng, out_dim=patch_len)
            self.bias_kbg = KernelBiasGenerator(f"{prefix}.bias_kbg", rng, out_dim=1)
        self.proj_spec = ConvSpec(channels, channels, 1, 1)
        bound = 1.0 / math.sqrt(channels)
        self.proj_weight = Parameter(
            f"{prefix}.proj.weight",
            rng.uniform(-bound, bound, size=self.proj_spec.weight_shape).astype(np.float32),
        )
        self.proj_bias = Parameter(f"{prefix}.proj.bias", np.zeros(channels, dtype=np.float32))

    def params(self):
        if self.adaptive:
            yield from self.kernel_kbg.params()
            yield from self.bias_kbg.params()
        yield self.proj_weight
        yield self.proj_bias

    def _project(self, aggregated: Tensor) -> Tensor:
        # The 1x1 projection acts on Cx1x1 vectors; over the patch batch that
        # is exactly a matmul against the (C, C) weight plane.
        w2d = reshape(self.proj_weight, (self.channels, self.channels))
        return add(matmul(aggregated, transpose2d(w2d)), self.proj_bias)

    def __call__(self, x: Tensor) -> Tensor:
        if not self.adaptive:
            return self.pooling_variant(x)
        grid = self.grid
        flat_d = grid.distances.reshape(-1)
        kernels = self.kernel_kbg(flat_d)
        biases = self.bias_kbg(flat_d)
        aggregated = add(patch_weighted_sum(x, kernels, grid), biases)
        return patch_scale(x, self._project(aggregated), grid)

    def pooling_variant(self, x: Tensor) -> Tensor:
        """Ablation: fixed per-patch average pooling instead of kernel/bias aggregation."""
        grid = self.grid
        mn = grid.rows * grid.cols
        plen = grid.patch_h * grid.patch_w
        uniform = Tensor(np.full((mn, plen), 1.0 / plen, dtype=x.dtype))
        aggregated = patch_weighted_sum(x, uniform, grid)
        return patch_scale(x, self._project(aggregated), grid)


def afpm_forward(x: Tensor, module: Afpm, grid: PatchGrid | None = None) -> Tensor:
    """Functional entry point; ``grid`` defaults to the module's own geometry."""
    if grid is not None:
        _check_tiling(x, grid)
    return module(x)


def afpm_pooling_variant(x: Tensor, module: Afpm, grid: PatchGrid | None = None) -> Tensor:
    if grid is not None:
        _check_tiling(x, grid)
    return module.pooling_variant(x)
