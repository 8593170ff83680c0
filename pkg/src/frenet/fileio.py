"""Binary file formats: .ften tensors, .fckpt checkpoints, PGM/PPM images.

.ften: magic "FTEN1\\n", then rank and each dim as unsigned 32-bit
little-endian, then the raw 32-bit little-endian float payload.

.fckpt: magic "FRENETCK1\\n"; u32 parameter count; per record a u32 name
length, the UTF-8 name, u32 rank, u32 dims, and the f32 payload; the same
record structure again for optimizer moments (names prefixed "adam.m." /
"adam.v."); then a trailer with the step count, the canonical config text the
network was built from, and the SHA-256 digest of that text.

RAW images travel as binary 16-bit PGM ("P5", maxval 65535, big-endian
samples); 3-channel images as 8-bit binary PPM ("P6").
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .runconfig import parse_checkpoint_config, render_checkpoint_config
from .tensor import ConfigurationError

FTEN_MAGIC = b"FTEN1\n"
CKPT_MAGIC = b"FRENETCK1\n"


def write_ften(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FTEN_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_ften(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if not blob.startswith(FTEN_MAGIC):
        raise ConfigurationError(f"{path}: not a .ften file (bad magic)")
    offset = len(FTEN_MAGIC)
    (rank,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 4 * count
    if len(blob) != expected:
        raise ConfigurationError(f"{path}: payload size {len(blob) - offset} != {4 * count}")
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float32)


def _write_record(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_record(blob: bytes, offset: int) -> tuple[str, np.ndarray, int]:
    (name_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    name = blob[offset : offset + name_len].decode("utf-8")
    offset += name_len
    (rank,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(dims)
    offset += 4 * count
    return name, data.astype(np.float32), offset


def save_checkpoint(path: str | Path, net, adam=None, step: int = 0,
                    preprocess=None) -> None:
    from .rawdata import PreprocessSpec

    preprocess = preprocess if preprocess is not None else PreprocessSpec()
    config_text = render_checkpoint_config(net.cfg, preprocess)
    params = net.parameters()
    moments: list[tuple[str, np.ndarray]] = []
    if adam is not None:
        for name in params:
            if name in adam.m:
                moments.append((f"adam.m.{name}", adam.m[name]))
                moments.append((f"adam.v.{name}", adam.v[name]))
        step = adam.step
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, p in params.items():
            _write_record(fh, name, p.data)
        fh.write(struct.pack("<I", len(moments)))
        for name, arr in moments:
            _write_record(fh, name, arr)
        encoded = config_text.encode("utf-8")
        fh.write(struct.pack("<I", step))
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(hashlib.sha256(encoded).digest())


class Checkpoint:
    def __init__(self, params, adam_m, adam_v, step, config_text):
        self.params: dict[str, np.ndarray] = params
        self.adam_m: dict[str, np.ndarray] = adam_m
        self.adam_v: dict[str, np.ndarray] = adam_v
        self.step = step
        self.config_text = config_text


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if not blob.startswith(CKPT_MAGIC):
        raise ConfigurationError(f"{path}: not a .fckpt file (bad magic)")
    offset = len(CKPT_MAGIC)
    (param_count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(param_count):
        name, data, offset = _read_record(blob, offset)
        params[name] = data
    (moment_count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for _ in range(moment_count):
        name, data, offset = _read_record(blob, offset)
        if name.startswith("adam.m."):
            adam_m[name[len("adam.m.") :]] = data
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v.") :]] = data
        else:
            raise ConfigurationError(f"{path}: unexpected moment record {name!r}")
    step, config_len = struct.unpack_from("<II", blob, offset)
    offset += 8
    encoded = blob[offset : offset + config_len]
    offset += config_len
    digest = blob[offset : offset + 32]
    if hashlib.sha256(encoded).digest() != digest:
        raise ConfigurationError(f"{path}: config digest mismatch (corrupt checkpoint)")
    return Checkpoint(params, adam_m, adam_v, step, encoded.decode("utf-8"))


def restore_network(path: str | Path, seed: int = 0):
    """Rebuild the network a checkpoint describes and load its parameters.

    Returns (net, preprocess_spec, adam_state, step).
    """
    from .arch import build_frenet
    from .train import AdamState

    ckpt = load_checkpoint(path)
    net_cfg, preprocess = parse_checkpoint_config(ckpt.config_text)
    net = build_frenet(net_cfg, seed=seed)
    params = net.parameters()
    missing = sorted(set(params) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(params))
    if missing or extra:
        raise ConfigurationError(
            f"{path}: parameter tree mismatch (missing {missing[:3]}, extra {extra[:3]})"
        )
    for name, p in params.items():
        stored = ckpt.params[name]
        if stored.shape != p.data.shape:
            raise ConfigurationError(
                f"{path}: shape mismatch for {name}: {stored.shape} vs {p.data.shape}"
            )
        p.data = stored.copy()
    state = AdamState(step=ckpt.step)
    for name in ckpt.adam_m:
        state.m[name] = ckpt.adam_m[name].copy()
        state.v[name] = ckpt.adam_v[name].copy()
    return net, preprocess, state, ckpt.step


def write_pgm16(path: str | Path, plane: np.ndarray) -> None:
    """Single-channel counts as binary PGM, maxval 65535, big-endian samples."""
    arr = np.asarray(plane)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ConfigurationError(f"PGM writer expects one plane, got shape {arr.shape}")
    counts = np.clip(np.rint(arr), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii"))
        fh.write(counts.tobytes())


def _read_pnm_header(blob: bytes, magic: bytes):
    if not blob.startswith(magic):
        raise ConfigurationError(f"expected {magic.decode()} header")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    return fields[0], fields[1], fields[2], pos + 1


def read_pgm16(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    width, height, maxval, offset = _read_pnm_header(blob, b"P5")
    if maxval <= 255:
        data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=offset)
    else:
        data = np.frombuffer(blob, dtype=">u2", count=width * height, offset=offset)
    return data.reshape(1, height, width).astype(np.float32)


def write_ppm8(path: str | Path, rgb: np.ndarray) -> None:
    """3xHxW values in [0,1] as binary 8-bit PPM."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ConfigurationError(f"PPM writer expects 3xHxW, got shape {arr.shape}")
    interleaved = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{arr.shape[2]} {arr.shape[1]}\n255\n".encode("ascii"))
        fh.write(interleaved.tobytes())


def read_ppm8(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    width, height, maxval, offset = _read_pnm_header(blob, b"P6")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height * 3, offset=offset)
    return (data.reshape(height, width, 3).transpose(2, 0, 1) / maxval).astype(np.float32)
