"""Loss, Adam, cosine schedule, the training loop, and tiled inference.

The loss is mean absolute error plus a weighted frequency-reconstruction term:
the L1 distance between the real/imaginary parts of the orthonormal spectra of
prediction and target. One epoch is one seeded-shuffle pass over the corpus;
the learning rate follows cosine annealing per epoch.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .metrics import psnr
from .rawdata import bayer_unpack
from .spectral import complex_to_channels, fft2d
from .tensor import ConfigurationError, EvaluationError, Parameter, Tensor, abs_, add, mean_all, scale, sub


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    lr_min: float = 1e-6
    epochs: int = 10
    batch: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fr_weight: float = 0.01
    seed: int = 0
    max_steps: int | None = None  # optional hard cap, for fixed-step experiments
    val_count: int = 16

    def validate(self) -> None:
        if not (self.lr0 > self.lr_min > 0):
            raise ConfigurationError(f"need lr0 > lr_min > 0, got {self.lr0}/{self.lr_min}")
        if self.batch < 1:
            raise ConfigurationError(f"batch must be >= 1, got {self.batch}")
        if self.fr_weight < 0:
            raise ConfigurationError(f"fr_weight must be >= 0, got {self.fr_weight}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")


def loss_total(pred: Tensor, target: Tensor, fr_weight: float) -> Tensor:
    """mean|pred - target| + fr_weight * mean|F(pred) - F(target)| (L1 over re and im)."""
    if pred.shape != target.shape:
        raise ConfigurationError(f"loss shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    l1 = mean_all(abs_(sub(pred, target)))
    if fr_weight == 0.0:
        return l1
    spec_pred = complex_to_channels(fft2d(pred))
    spec_target = complex_to_channels(fft2d(target))
    l_fr = mean_all(abs_(sub(spec_pred, spec_target)))
    return add(l1, scale(l_fr, fr_weight))


def cosine_lr(t: int, total: int, lr0: float, lr_min: float) -> float:
    """lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi*t/total)) for t in [0, total]."""
    if not 0 <= t <= total:
        raise ConfigurationError(f"epoch {t} outside [0, {total}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / total))


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Sequence[Parameter],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard bias-corrected Adam update; missing gradients count as zero."""
    state.step += 1
    t = state.step
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


@dataclass
class TrainResult:
    step_losses: list[float]
    val_psnr: list[float]
    best_psnr: float
    log_lines: list[str]
    final_checkpoint: Path | None
    best_checkpoint: Path | None


def validation_psnr(net, pairs: Sequence[tuple[Tensor, Tensor]]) -> float:
    """Mean PSNR on unpacked single-channel RAW, network output vs sharp."""
    scores = []
    for blurred, sharp in pairs:
        out = net.forward(blurred)
        scores.append(psnr(bayer_unpack(Tensor(out.data)), bayer_unpack(sharp)))
    return float(np.mean(scores))


def baseline_psnr(pairs: Sequence[tuple[Tensor, Tensor]]) -> float:
    """PSNR of the blurred inputs themselves (the no-op deblurrer)."""
    return float(np.mean([psnr(bayer_unpack(b), bayer_unpack(s)) for b, s in pairs]))


def train(
    net,
    corpus: Sequence[tuple[Tensor, Tensor]],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    val_pairs: Sequence[tuple[Tensor, Tensor]] | None = None,
    log: Callable[[str], None] | None = None,
    preprocess=None,
) -> TrainResult:
    """Seeded SGD-over-epochs driver writing ".fckpt" checkpoints and a line log.

    When ``val_pairs`` is None the last ``cfg.val_count`` corpus items are held
    out. Aborts with the last good checkpoint if the loss turns non-finite.
    """
    from .fileio import save_checkpoint

    cfg.validate()
    if not corpus:
        raise ConfigurationError("training corpus is empty")
    if val_pairs is None:
        held = min(cfg.val_count, max(len(corpus) - 1, 0))
        val_pairs = corpus[len(corpus) - held :] if held else []
        corpus = corpus[: len(corpus) - held]
    if not corpus:
        raise ConfigurationError("no training items left after validation split")

    params = list(net.parameters().values())
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    lines: list[str] = []

    def emit(text: str) -> None:
        lines.append(text)
        if log is not None:
            log(text)

    def write_ckpt(path: Path) -> Path:
        save_checkpoint(path, net, adam=state, step=state.step, preprocess=preprocess)
        return path

    step_losses: list[float] = []
    val_history: list[float] = []
    best = -math.inf
    best_path = final_path = None
    steps_per_epoch = max(len(corpus) // cfg.batch, 1)
    done = False

    for epoch in range(1, cfg.epochs + 1):
        lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr0, cfg.lr_min)
        order = rng.permutation(len(corpus))
        for k in range(steps_per_epoch):
            batch = order[k * cfg.batch : (k + 1) * cfg.batch]
            net.zero_grad()
            total = None
            for idx in batch:
                blurred, sharp = corpus[idx]
                item_loss = loss_total(net.forward(blurred), sharp, cfg.fr_weight)
                total = item_loss if total is None else add(total, item_loss)
            loss = scale(total, 1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                if out_dir is not None:
                    final_path = write_ckpt(out_dir / "final.fckpt")
                raise EvaluationError(
                    f"non-finite loss {value} at epoch {epoch} batch {k} "
                    f"(batch indices {list(map(int, batch))})"
                )
            loss.backward()
            adam_step(params, state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            step_losses.append(value)
            emit(f"epoch {epoch} step {state.step} lr {lr:.6g} loss {value:.6f}")
            if cfg.max_steps is not None and state.step >= cfg.max_steps:
                done = True
                break
        if val_pairs:
            score = validation_psnr(net, val_pairs)
            val_history.append(score)
            emit(f"epoch {epoch} step {state.step} lr {lr:.6g} loss {step_losses[-1]:.6f} val_psnr {score:.4f}")
            if score > best:
                best = score
                if out_dir is not None:
                    best_path = write_ckpt(out_dir / "best.fckpt")
        if done:
            break

    if out_dir is not None:
        final_path = write_ckpt(out_dir / "final.fckpt")
        (out_dir / "training.log").write_text("\n".join(lines) + "\n")
    return TrainResult(
        step_losses=step_losses,
        val_psnr=val_history,
        best_psnr=best,
        log_lines=lines,
        final_checkpoint=final_path,
        best_checkpoint=best_path,
    )


def worker_count() -> int:
    """Worker cap from FRENET_THREADS (0 or unset-invalid = auto, default 1)."""
    raw = os.environ.get("FRENET_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n == 0:
        return os.cpu_count() or 1
    return max(n, 1)


def _tile_positions(extent: int, window: int, stride: int) -> list[int]:
    positions = list(range(0, extent - window + 1, stride))
    if positions[-1] != extent - window:
        positions.append(extent - window)
    return positions


def raised_cosine_profile(window: int) -> np.ndarray:
    """Half-sample-offset Hann profile; strictly positive on [0, window)."""
    t = (np.arange(window) + 0.5) / window
    return np.square(np.sin(math.pi * t))


def blend_weight_map(h: int, w: int, window: int, overlap: int) -> np.ndarray:
    """Accumulated raw tile weights over the image (before normalization)."""
    profile = raised_cosine_profile(window)
    tile = np.outer(profile, profile)
    stride = window - overlap
    acc = np.zeros((h, w))
    for y0 in _tile_positions(h, window, stride):
        for x0 in _tile_positions(w, window, stride):
            acc[y0 : y0 + window, x0 : x0 + window] += tile
    return acc


def sliding_window_infer(net, image: Tensor, window: int | None = None,
                         overlap: int | None = None) -> Tensor:
    """Tile the image, run the network per tile, and blend with raised-cosine weights.

    Accepts a network object (``forward`` method) or any per-tile callable.
    Tiles are reduced in index order so the result is deterministic regardless
    of FRENET_THREADS.
    """
    forward = net.forward if hasattr(net, "forward") else net
    c, h, w = image.shape
    if window is None:
        window = min(h, w)
    if window > h or window > w:
        raise ConfigurationError(f"window {window} exceeds image {h}x{w}")
    if overlap is None:
        overlap = window // 2
    if not 0 <= overlap < window:
        raise ConfigurationError(f"overlap {overlap} must be in [0, window)")

    positions = [
        (y0, x0)
        for y0 in _tile_positions(h, window, window - overlap)
        for x0 in _tile_positions(w, window, window - overlap)
    ]
    if len(positions) == 1:
        out = forward(Tensor(image.data))
        return Tensor(np.array(out.data if isinstance(out, Tensor) else out))

    def run_tile(pos):
        y0, x0 = pos
        tile = Tensor(np.ascontiguousarray(image.data[:, y0 : y0 + window, x0 : x0 + window]))
        out = forward(tile)
        return np.array(out.data if isinstance(out, Tensor) else out, dtype=np.float64)

    workers = worker_count()
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            tiles = list(pool.map(run_tile, positions))
    else:
        tiles = [run_tile(pos) for pos in positions]

    profile = raised_cosine_profile(window)
    weight = np.outer(profile, profile)
    acc_val = np.zeros((c, h, w))
    acc_w = np.zeros((h, w))
    for (y0, x0), tile_out in zip(positions, tiles):
        acc_val[:, y0 : y0 + window, x0 : x0 + window] += tile_out * weight
        acc_w[y0 : y0 + window, x0 : x0 + window] += weight
    return Tensor((acc_val / acc_w).astype(np.float32))
