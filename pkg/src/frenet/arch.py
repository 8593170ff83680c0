"""FrE-Blocks and the full U-shaped network with dual skip connections.

Each scale halves the spatial size and doubles the channel count. Encoder
layers downsample first and then run their blocks; decoder layers add the
spatial skip, run their blocks (each receiving the stored encoder spectrum of
the same scale when frequency skips are enabled), then upsample. The spectrum
captured for the frequency skip is the block's processed complex output in the
centered frame, taken before un-shifting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .afpm import Afpm, PatchGrid, make_patch_grid
from .spectral import (
    ComplexTensor,
    channels_to_complex,
    complex_to_channels,
    fft2d,
    fft_shift,
    ifft2d,
)
from .tensor import (
    ConfigurationError,
    ConvSpec,
    Parameter,
    Tensor,
    add,
    conv2d,
    depth_to_space,
    global_avg_pool,
    gelu,
    is_power_of_two,
    layer_norm_channels,
    mul,
    simple_gate,
)

# Published efficiency figures for the preset configs (params, conv MACs on the
# preset's nominal input), used by the analyze report for comparison.
REFERENCE_EFFICIENCY = {
    "frenet": (19.76e6, 2.22e9),
    "frenet-plus": (48.38e6, 7.30e9),
}


@dataclass
class NetworkConfig:
    """Architectural hyperparameters, including the ablation toggles."""

    in_channels: int = 4
    width: int = 32
    scales: int = 3
    enc_blocks: tuple[int, ...] = (4, 3, 2)
    bottleneck_blocks: int = 6
    dec_blocks: tuple[int, ...] = (4, 3, 2)
    grid_target: int = 8
    base_size: int = 64
    ffn_expand: float = 2.0
    use_freq_skip: bool = True
    use_spatial_skip: bool = True
    use_local_branch: bool = True
    use_global_branch: bool = True
    use_pooling_variant: bool = False
    global_residual: bool = False
    name: str = "custom"

    def __post_init__(self):
        self.enc_blocks = tuple(self.enc_blocks)
        self.dec_blocks = tuple(self.dec_blocks)

    @property
    def block_total(self) -> int:
        return sum(self.enc_blocks) + self.bottleneck_blocks + sum(self.dec_blocks)

    def violations(self) -> list[str]:
        bad = []
        if self.in_channels < 1:
            bad.append(f"in_channels must be >= 1, got {self.in_channels}")
        if self.width < 2 or self.width % 2:
            bad.append(f"width must be a positive even number, got {self.width}")
        if self.scales < 1:
            bad.append(f"scales must be >= 1, got {self.scales}")
        if len(self.enc_blocks) != self.scales or len(self.dec_blocks) != self.scales:
            bad.append(
                f"enc_blocks/dec_blocks must list {self.scales} scales, got "
                f"{len(self.enc_blocks)}/{len(self.dec_blocks)}"
            )
        if any(n < 1 for n in self.enc_blocks) or any(m < 1 for m in self.dec_blocks):
            bad.append("every scale needs at least one block")
        if self.bottleneck_blocks < 1:
            bad.append(f"bottleneck_blocks must be >= 1, got {self.bottleneck_blocks}")
        if not is_power_of_two(self.base_size) or self.base_size % (1 << self.scales):
            bad.append(
                f"base_size must be a power of two divisible by 2^scales, got {self.base_size}"
            )
        if self.grid_target < 1:
            bad.append(f"grid_target must be >= 1, got {self.grid_target}")
        if self.ffn_expand <= 0:
            bad.append(f"ffn_expand must be positive, got {self.ffn_expand}")
        if not (self.use_local_branch or self.use_global_branch):
            bad.append("at least one of use_local_branch/use_global_branch must be enabled")
        return bad

    def validate(self) -> None:
        bad = self.violations()
        if bad:
            raise ConfigurationError("invalid config: " + "; ".join(bad))


def frenet_config(**overrides) -> NetworkConfig:
    """Width-32, 24-block preset (enc 4-3-2, bottleneck 6, dec 4-3-2, 3 scales)."""
    cfg = NetworkConfig(name="frenet")
    return replace(cfg, **overrides) if overrides else cfg


def frenet_plus_config(**overrides) -> NetworkConfig:
    """Width-64, 20-block preset."""
    cfg = NetworkConfig(
        name="frenet-plus",
        width=64,
        enc_blocks=(4, 4, 1),
        bottleneck_blocks=2,
        dec_blocks=(4, 4, 1),
    )
    return replace(cfg, **overrides) if overrides else cfg


def tiny_config(base_size: int = 16, **overrides) -> NetworkConfig:
    """Desk-scale fixture: width 4, two scales, one block per layer."""
    cfg = NetworkConfig(
        name="tiny",
        width=4,
        scales=2,
        enc_blocks=(1, 1),
        bottleneck_blocks=1,
        dec_blocks=(1, 1),
        base_size=base_size,
    )
    return replace(cfg, **overrides) if overrides else cfg


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    # Fan-in uniform bound 1/sqrt(fan_in); the gated/multiplicative blocks blow
    # up under hotter schemes.
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv:
    """Convolution layer owning its spec, weight, and optional bias."""

    def __init__(self, prefix: str, rng: np.random.Generator, spec: ConvSpec):
        self.spec = spec
        fan_in = (spec.in_channels // spec.groups) * spec.kernel_h * spec.kernel_w
        self.weight = Parameter(f"{prefix}.weight", _kaiming_uniform(rng, spec.weight_shape, fan_in))
        self.bias = (
            Parameter(f"{prefix}.bias", np.zeros(spec.out_channels, dtype=np.float32))
            if spec.has_bias
            else None
        )

    def params(self):
        yield self.weight
        if self.bias is not None:
            yield self.bias

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.spec, self.weight, self.bias)


class LayerNormChannels:
    def __init__(self, prefix: str, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Parameter(f"{prefix}.gamma", np.ones(channels, dtype=np.float32))
        self.beta = Parameter(f"{prefix}.beta", np.zeros(channels, dtype=np.float32))

    def params(self):
        yield self.gamma
        yield self.beta

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm_channels(x, self.gamma, self.beta, self.eps)


class Sca:
    """Simplified channel attention: pooled 1x1 projection rescales every channel."""

    def __init__(self, prefix: str, rng: np.random.Generator, channels: int):
        self.proj = Conv(f"{prefix}.proj", rng, ConvSpec(channels, channels, 1, 1))

    def params(self):
        yield from self.proj.params()

    def __call__(self, x: Tensor) -> Tensor:
        return mul(self.proj(global_avg_pool(x)), x)


def sca_forward(x: Tensor, module: Sca) -> Tensor:
    return module(x)


class Facm:
    """Frequency adaptive context module.

    Pipeline: FFT -> shift -> (+ frequency skip) -> pack re/im as channels ->
    layer norm -> 1x1 expand -> 3x3 depthwise -> SimpleGate -> local (AFPM) and
    global (SCA) branches -> fuse -> 1x1 -> unpack -> unshift -> IFFT, with a
    residual connection around the whole module.
    """

    def __init__(self, prefix: str, rng: np.random.Generator, channels: int,
                 cfg: NetworkConfig, grid: PatchGrid):
        self.channels = channels
        self.cfg = cfg
        packed = 2 * channels
        self.norm = LayerNormChannels(f"{prefix}.norm", packed)
        self.conv_in = Conv(f"{prefix}.conv_in", rng, ConvSpec(packed, 2 * packed, 1, 1))
        self.dw = Conv(
            f"{prefix}.dw", rng,
            ConvSpec(2 * packed, 2 * packed, 3, 3, groups=2 * packed),
        )
        self.afpm = None
        if cfg.use_local_branch:
            self.afpm = Afpm(
                f"{prefix}.afpm", rng, packed, grid, adaptive=not cfg.use_pooling_variant
            )
        self.sca = Sca(f"{prefix}.sca", rng, packed) if cfg.use_global_branch else None
        self.conv_out = Conv(f"{prefix}.conv_out", rng, ConvSpec(packed, packed, 1, 1))

    def params(self):
        yield from self.norm.params()
        yield from self.conv_in.params()
        yield from self.dw.params()
        if self.afpm is not None:
            yield from self.afpm.params()
        if self.sca is not None:
            yield from self.sca.params()
        yield from self.conv_out.params()

    def __call__(self, f_in: Tensor, freq_skip: ComplexTensor | None = None,
                 capture: bool = False) -> tuple[Tensor, ComplexTensor | None]:
        spectrum = fft_shift(fft2d(f_in))
        if freq_skip is not None:
            if freq_skip.shape != spectrum.shape:
                raise ConfigurationError(
                    f"frequency skip shape {tuple(freq_skip.shape)} does not match "
                    f"spectrum {tuple(spectrum.shape)}"
                )
            spectrum = spectrum + freq_skip
        f_norm = self.norm(complex_to_channels(spectrum))
        f_processed = simple_gate(self.dw(self.conv_in(f_norm)))
        branches = []
        if self.afpm is not None:
            branches.append(self.afpm(f_processed))
        if self.sca is not None:
            branches.append(self.sca(f_processed))
        f_fused = branches[0] if len(branches) == 1 else add(branches[0], branches[1])
        f_final = self.conv_out(f_fused)
        out_spectrum = channels_to_complex(f_final)
        captured = out_spectrum if capture else None
        f_out = add(f_in, ifft2d(fft_shift(out_spectrum, inverse=True)))
        return f_out, captured


def facm_forward(f_in, module: Facm, freq_skip=None, capture=False):
    return module(f_in, freq_skip, capture)


class Ffn:
    """Gated dual-branch feed-forward: two expand+depthwise paths multiplied, projected back."""

    def __init__(self, prefix: str, rng: np.random.Generator, channels: int, expand: float):
        hidden = math.ceil(expand * channels)
        self.branch1_conv = Conv(f"{prefix}.branch1.conv", rng, ConvSpec(channels, hidden, 1, 1))
        self.branch1_dw = Conv(f"{prefix}.branch1.dw", rng, ConvSpec(hidden, hidden, 3, 3, groups=hidden))
        self.branch2_conv = Conv(f"{prefix}.branch2.conv", rng, ConvSpec(channels, hidden, 1, 1))
        self.branch2_dw = Conv(f"{prefix}.branch2.dw", rng, ConvSpec(hidden, hidden, 3, 3, groups=hidden))
        self.proj = Conv(f"{prefix}.proj", rng, ConvSpec(hidden, channels, 1, 1))

    def params(self):
        for layer in (self.branch1_conv, self.branch1_dw, self.branch2_conv, self.branch2_dw, self.proj):
            yield from layer.params()

    def __call__(self, f_in: Tensor) -> Tensor:
        gated = gelu(self.branch1_dw(self.branch1_conv(f_in)))
        value = self.branch2_dw(self.branch2_conv(f_in))
        return add(f_in, self.proj(mul(gated, value)))


def ffn_forward(f_in, module: Ffn):
    return module(f_in)


class FreBlock:
    def __init__(self, name: str, rng: np.random.Generator, channels: int,
                 cfg: NetworkConfig, grid: PatchGrid):
        self.name = name
        self.facm = Facm(f"{name}.facm", rng, channels, cfg, grid)
        self.ffn = Ffn(f"{name}.ffn", rng, channels, cfg.ffn_expand)

    def params(self):
        yield from self.facm.params()
        yield from self.ffn.params()

    def __call__(self, f_in, freq_skip=None, capture=False):
        f_mid, captured = self.facm(f_in, freq_skip, capture)
        return self.ffn(f_mid), captured


def fre_block_forward(f_in, block: FreBlock, freq_skip=None, capture=False):
    return block(f_in, freq_skip, capture)


class Down:
    """2x2 stride-2 convolution doubling the channel count."""

    def __init__(self, prefix: str, rng: np.random.Generator, channels: int):
        self.conv = Conv(prefix, rng, ConvSpec(channels, 2 * channels, 2, 2, stride=2))

    def params(self):
        yield from self.conv.params()

    def __call__(self, x: Tensor) -> Tensor:
        _, h, w = x.shape
        if h % 2 or w % 2:
            raise ConfigurationError(f"downsample needs even spatial dims, got {h}x{w}")
        return self.conv(x)


def downsample(x, module: Down):
    return module(x)


class Up:
    """1x1 conv, depth-to-space by 2, then 1x1 conv: 2C x H x W -> C x 2H x 2W."""

    def __init__(self, prefix: str, rng: np.random.Generator, in_channels: int):
        if in_channels % 4:
            raise ConfigurationError(
                f"upsample needs channels divisible by 4 after the first conv, got {in_channels}"
            )
        self.conv1 = Conv(f"{prefix}.conv1", rng, ConvSpec(in_channels, in_channels, 1, 1))
        self.conv2 = Conv(f"{prefix}.conv2", rng, ConvSpec(in_channels // 4, in_channels // 2, 1, 1))

    def params(self):
        yield from self.conv1.params()
        yield from self.conv2.params()

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv2(depth_to_space(self.conv1(x), 2))


def upsample(x, module: Up):
    return module(x)


@dataclass
class _EncStage:
    down: Down
    blocks: list[FreBlock] = field(default_factory=list)


@dataclass
class _DecStage:
    blocks: list[FreBlock]
    up: Up


class FrENet:
    """The assembled network; parameters carry deterministic dotted-path names."""

    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c_in, width = cfg.in_channels, cfg.width
        self.intro = Conv("intro", rng, ConvSpec(c_in, width, 3, 3))

        self.enc_stages: list[_EncStage] = []
        channels, size = width, cfg.base_size
        for i in range(1, cfg.scales + 1):
            stage = _EncStage(down=Down(f"enc{i}.down", rng, channels))
            channels *= 2
            size //= 2
            grid = make_patch_grid(size, size, cfg.grid_target)
            for b in range(cfg.enc_blocks[i - 1]):
                stage.blocks.append(FreBlock(f"enc{i}.blk{b}", rng, channels, cfg, grid))
            self.enc_stages.append(stage)

        grid = make_patch_grid(size, size, cfg.grid_target)
        self.mid_blocks = [
            FreBlock(f"mid.blk{b}", rng, channels, cfg, grid)
            for b in range(cfg.bottleneck_blocks)
        ]

        self.dec_stages: list[_DecStage | None] = [None] * cfg.scales
        for i in range(cfg.scales, 0, -1):
            ch_i = width << i
            size_i = cfg.base_size >> i
            grid = make_patch_grid(size_i, size_i, cfg.grid_target)
            blocks = [
                FreBlock(f"dec{i}.blk{b}", rng, ch_i, cfg, grid)
                for b in range(cfg.dec_blocks[i - 1])
            ]
            self.dec_stages[i - 1] = _DecStage(blocks=blocks, up=Up(f"dec{i}.up", rng, ch_i))

        self.final = Conv("final", rng, ConvSpec(width, c_in, 3, 3))
        if cfg.global_residual:
            # Residual completion: start as the exact identity so training
            # begins from the degraded input's own quality.
            self.final.weight.data = np.zeros_like(self.final.weight.data)

        self._params: dict[str, Parameter] = {}
        for p in self._iter_params():
            if p.name in self._params:
                raise ConfigurationError(f"duplicate parameter name {p.name}")
            self._params[p.name] = p

    def _iter_params(self):
        yield from self.intro.params()
        for stage in self.enc_stages:
            yield from stage.down.params()
            for blk in stage.blocks:
                yield from blk.params()
        for blk in self.mid_blocks:
            yield from blk.params()
        for stage in reversed(self.dec_stages):
            for blk in stage.blocks:
                yield from blk.params()
            yield from stage.up.params()
        yield from self.final.params()

    def parameters(self) -> dict[str, Parameter]:
        return self._params

    def param_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def blocks(self) -> Iterable[FreBlock]:
        for stage in self.enc_stages:
            yield from stage.blocks
        yield from self.mid_blocks
        for stage in reversed(self.dec_stages):
            yield from stage.blocks

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def forward(self, y: Tensor, trace: dict | None = None,
                spectrum_taps: Iterable[str] = ()) -> Tensor:
        cfg = self.cfg
        expected = (cfg.in_channels, cfg.base_size, cfg.base_size)
        if tuple(y.shape) != expected:
            raise ConfigurationError(
                f"input shape {tuple(y.shape)} does not match the built geometry {expected}"
            )
        taps = set(spectrum_taps)
        if taps and trace is None:
            raise ConfigurationError("spectrum_taps requires a trace dict to fill")
        capture_set = (
            {id(stage.blocks[-1]) for stage in self.enc_stages} if cfg.use_freq_skip else set()
        )

        def run_block(blk, f, skip):
            want = blk.name in taps
            f, spectrum = blk(f, skip, capture=want or id(blk) in capture_set)
            if want:
                trace[f"{blk.name}.spectrum"] = spectrum.detach()
            return f, spectrum

        f = self.intro(y)
        store: list[ComplexTensor | None] = []
        enc_feats: list[Tensor] = []
        for i, stage in enumerate(self.enc_stages, start=1):
            f = stage.down(f)
            kept = None
            for blk in stage.blocks:
                f, spectrum = run_block(blk, f, None)
                if id(blk) in capture_set:
                    kept = spectrum
            assert f.shape == (cfg.width << i, cfg.base_size >> i, cfg.base_size >> i)
            store.append(kept)
            enc_feats.append(f)
            if trace is not None:
                trace[f"enc{i}"] = np.array(f.data)

        for blk in self.mid_blocks:
            f, _ = run_block(blk, f, None)
        if trace is not None:
            trace["mid"] = np.array(f.data)

        for idx in range(cfg.scales - 1, -1, -1):
            stage = self.dec_stages[idx]
            if cfg.use_spatial_skip:
                f = add(f, enc_feats[idx])
            for blk in stage.blocks:
                f, _ = run_block(blk, f, store[idx] if cfg.use_freq_skip else None)
            f = stage.up(f)

        out = self.final(f)
        if cfg.global_residual:
            out = add(out, y)
        return out


def build_frenet(cfg: NetworkConfig, seed: int = 0) -> FrENet:
    """Construct the network; raises ConfigurationError listing every violation."""
    return FrENet(cfg, seed=seed)


def network_forward(net: FrENet, y: Tensor) -> Tensor:
    return net.forward(y)
