"""Plain `key = value` run configuration files.

One flat, order-independent namespace covers the network, training recipe,
sensor preprocessing, and dataset generation. Unknown keys are rejected and
every key of a section being parsed must be present, so configs stay diffable
and cannot silently drift. `#` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass

from .arch import NetworkConfig
from .rawdata import PreprocessSpec
from .tensor import ConfigurationError
from .train import TrainConfig


@dataclass
class DatasetParams:
    count: int = 200
    image_size: int = 64  # RAW (pre-packing) height and width
    noise_sigma: float = 0.002
    kernel_kind: str = "gaussian"
    kernel_size: int = 5
    sigma_min: float = 0.8
    sigma_max: float = 2.0

    def validate(self) -> None:
        if self.count < 1:
            raise ConfigurationError(f"count must be >= 1, got {self.count}")
        if self.image_size < 2 or self.image_size % 2:
            raise ConfigurationError(f"image_size must be even and >= 2, got {self.image_size}")
        if self.kernel_kind not in ("gaussian", "motion", "mixed", "none"):
            raise ConfigurationError(f"unknown kernel_kind {self.kernel_kind!r}")
        if self.sigma_min > self.sigma_max:
            raise ConfigurationError("sigma_min must not exceed sigma_max")


@dataclass
class RunConfig:
    network: NetworkConfig
    train: TrainConfig
    preprocess: PreprocessSpec
    data: DatasetParams


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return f"{value:g}" if isinstance(value, float) else str(value)


def _parse_bool(raw: str, key: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ConfigurationError(f"{key} must be true or false, got {raw!r}")


def _parse_int_list(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be comma-separated integers, got {raw!r}") from exc


# key -> (section attribute on RunConfig, field name, parser)
_SCHEMA: dict[str, tuple[str, str, object]] = {
    "model": ("network", "name", str),
    "in_channels": ("network", "in_channels", int),
    "width": ("network", "width", int),
    "scales": ("network", "scales", int),
    "enc_blocks": ("network", "enc_blocks", "int_list"),
    "bottleneck_blocks": ("network", "bottleneck_blocks", int),
    "dec_blocks": ("network", "dec_blocks", "int_list"),
    "grid_target": ("network", "grid_target", int),
    "base_size": ("network", "base_size", int),
    "ffn_expand": ("network", "ffn_expand", float),
    "use_freq_skip": ("network", "use_freq_skip", "bool"),
    "use_spatial_skip": ("network", "use_spatial_skip", "bool"),
    "use_local_branch": ("network", "use_local_branch", "bool"),
    "use_global_branch": ("network", "use_global_branch", "bool"),
    "use_pooling_variant": ("network", "use_pooling_variant", "bool"),
    "global_residual": ("network", "global_residual", "bool"),
    "lr0": ("train", "lr0", float),
    "lr_min": ("train", "lr_min", float),
    "epochs": ("train", "epochs", int),
    "batch": ("train", "batch", int),
    "adam_beta1": ("train", "adam_beta1", float),
    "adam_beta2": ("train", "adam_beta2", float),
    "adam_eps": ("train", "adam_eps", float),
    "fr_weight": ("train", "fr_weight", float),
    "seed": ("train", "seed", int),
    "max_steps": ("train", "max_steps", "optional_int"),
    "val_count": ("train", "val_count", int),
    "black_level": ("preprocess", "black_level", float),
    "white_level": ("preprocess", "white_level", float),
    "count": ("data", "count", int),
    "image_size": ("data", "image_size", int),
    "noise_sigma": ("data", "noise_sigma", float),
    "kernel_kind": ("data", "kernel_kind", str),
    "kernel_size": ("data", "kernel_size", int),
    "sigma_min": ("data", "sigma_min", float),
    "sigma_max": ("data", "sigma_max", float),
}

NETWORK_KEYS = tuple(k for k, (sec, _, _) in _SCHEMA.items() if sec == "network")
PREPROCESS_KEYS = tuple(k for k, (sec, _, _) in _SCHEMA.items() if sec == "preprocess")


def _parse_lines(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw
    return values


def _convert(key: str, raw: str):
    _, _, parser = _SCHEMA[key]
    if parser == "bool":
        return _parse_bool(raw, key)
    if parser == "int_list":
        return _parse_int_list(raw, key)
    if parser == "optional_int":
        return None if raw == "none" else int(raw)
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {parser.__name__}") from exc


def _build_sections(values: dict[str, str], keys: tuple[str, ...]):
    unknown = sorted(set(values) - set(keys))
    missing = sorted(set(keys) - set(values))
    problems = []
    if unknown:
        problems.append("unknown keys: " + ", ".join(unknown))
    if missing:
        problems.append("missing keys: " + ", ".join(missing))
    if problems:
        raise ConfigurationError("bad config: " + "; ".join(problems))
    fields: dict[str, dict] = {"network": {}, "train": {}, "preprocess": {}, "data": {}}
    for key in keys:
        section, field, _ = _SCHEMA[key]
        fields[section][field] = _convert(key, values[key])
    return fields


def parse_run_config(text: str) -> RunConfig:
    fields = _build_sections(_parse_lines(text), tuple(_SCHEMA))
    cfg = RunConfig(
        network=NetworkConfig(**fields["network"]),
        train=TrainConfig(**fields["train"]),
        preprocess=PreprocessSpec(**fields["preprocess"]),
        data=DatasetParams(**fields["data"]),
    )
    cfg.network.validate()
    cfg.train.validate()
    cfg.data.validate()
    return cfg


def render_run_config(cfg: RunConfig) -> str:
    sections = {"network": cfg.network, "train": cfg.train, "preprocess": cfg.preprocess, "data": cfg.data}
    lines = []
    for key, (section, field, _) in _SCHEMA.items():
        lines.append(f"{key} = {_fmt(getattr(sections[section], field))}")
    return "\n".join(lines) + "\n"


def default_run_config() -> RunConfig:
    return RunConfig(
        network=NetworkConfig(name="frenet"),
        train=TrainConfig(),
        preprocess=PreprocessSpec(),
        data=DatasetParams(),
    )


def render_checkpoint_config(network: NetworkConfig, preprocess: PreprocessSpec) -> str:
    """Canonical network + preprocess subset stored inside checkpoints."""
    lines = []
    for key in NETWORK_KEYS:
        _, field, _ = _SCHEMA[key]
        lines.append(f"{key} = {_fmt(getattr(network, field))}")
    for key in PREPROCESS_KEYS:
        _, field, _ = _SCHEMA[key]
        lines.append(f"{key} = {_fmt(getattr(preprocess, field))}")
    return "\n".join(lines) + "\n"


def parse_checkpoint_config(text: str) -> tuple[NetworkConfig, PreprocessSpec]:
    fields = _build_sections(_parse_lines(text), NETWORK_KEYS + PREPROCESS_KEYS)
    network = NetworkConfig(**fields["network"])
    network.validate()
    return network, PreprocessSpec(**fields["preprocess"])
