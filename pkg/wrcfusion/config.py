"""
Run Configuration
Plain `key = value` run files with dotted section keys, command-line
overrides and the WRCFUSION_SEED environment override.
"""

import dataclasses
import logging
import math
import os
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from wrcfusion.detection.boxes import BoxCoder
from wrcfusion.detection.losses import LossWeights
from wrcfusion.errors import ConfigurationError
from wrcfusion.models.detector import DetectorConfig, parse_streams
from wrcfusion.models.fpn import FPNConfig
from wrcfusion.models.gpf import GSAConfig
from wrcfusion.models.wa_moe import WAMoEConfig
from wrcfusion.radar.cube import RadarGeometry
from wrcfusion.radar.synthesis import CameraModel, SceneSettings

logger = logging.getLogger(__name__)

SEED_ENV = "WRCFUSION_SEED"


@dataclass(frozen=True)
class DataConfig:
    root: str = "runs/data"
    train_split: str = "train"
    eval_split: str = "val"
    train_scenes: int = 64
    eval_scenes: int = 50
    workers: int = 4

    def __post_init__(self):
        if self.train_scenes < 0 or self.eval_scenes < 0:
            raise ConfigurationError("scene counts must be >= 0")
        if self.train_split == self.eval_split:
            raise ConfigurationError(f"train and eval splits must differ, both are {self.train_split!r}")


@dataclass(frozen=True)
class RadarConfig:
    dims: Tuple[int, int, int, int] = (32, 32, 8, 16)
    range_max_m: float = 48.0
    azimuth_fov_deg: float = 90.0
    elevation_fov_deg: float = 40.0
    doppler_resolution_mps: float = 1.0
    num_classes: int = 2
    max_targets: int = 3
    min_separation_m: float = 6.0
    noise_floor: float = 0.05


@dataclass(frozen=True)
class ImageConfig:
    size: Tuple[int, int] = (64, 64)
    hfov_deg: float = 90.0


@dataclass(frozen=True)
class ModelConfig:
    encoder_widths: Tuple[int, ...] = (16, 32, 64)
    image_strides: Tuple[int, ...] = (2, 2, 2)
    ra_strides: Tuple[int, ...] = (1, 2, 2)
    ea_strides: Tuple[int, ...] = (1, 1, 2)
    num_queries: int = 36
    iterations: int = 3
    samples: int = 4
    pool_attention: int = 4


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        max_steps: Optimizer steps.
        batch_size: Scenes per step; per-scene losses are averaged.
        lr: Initial learning rate of the cosine schedule.
        lr_floor: Learning rate reached at max_steps.
        checkpoint_every: Steps between checkpoints (0 = only at the end).
        prefetch: Bound of the batch-preparation queue.
    """

    max_steps: int = 200
    batch_size: int = 4
    lr: float = 1e-4
    lr_floor: float = 0.0
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    checkpoint_every: int = 50
    prefetch: int = 2
    log_every: int = 10

    def __post_init__(self):
        if self.max_steps < 0 or self.batch_size < 1:
            raise ConfigurationError("train.max_steps must be >= 0 and train.batch_size >= 1")
        if self.lr <= 0 or self.lr_floor < 0:
            raise ConfigurationError(f"learning rates must be positive, got lr={self.lr} floor={self.lr_floor}")
        if self.prefetch < 1:
            raise ConfigurationError("train.prefetch must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    split: str = "val"
    streams: str = "all"
    threshold: float = 0.3
    checkpoint: str = ""
    workers: int = 1

    def __post_init__(self):
        parse_streams(self.streams)
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigurationError(f"eval.threshold must be in (0, 1], got {self.threshold}")


@dataclass(frozen=True)
class BenchConfig:
    sweep: Tuple[int, ...] = (256, 512, 1024, 2048, 4096)
    pooled: int = 144
    key_length: int = 1024
    dim: int = 64
    repeats: int = 3


@dataclass(frozen=True)
class InspectConfig:
    split: str = "val"
    scene: str = "0000"
    checkpoint: str = ""


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/out"
    log_level: str = "INFO"
    log_files: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run; sections map to dotted keys in config files."""

    data: DataConfig = field(default_factory=DataConfig)
    radar: RadarConfig = field(default_factory=RadarConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    wa_moe: WAMoEConfig = field(default_factory=WAMoEConfig)
    fpn: FPNConfig = field(default_factory=FPNConfig)
    gsa: GSAConfig = field(default_factory=GSAConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    inspect: InspectConfig = field(default_factory=InspectConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    def geometry(self) -> RadarGeometry:
        r = self.radar
        return RadarGeometry(tuple(r.dims), r.range_max_m, r.azimuth_fov_deg, r.elevation_fov_deg,
                             r.doppler_resolution_mps)

    def camera(self) -> CameraModel:
        return CameraModel(tuple(self.image.size), self.image.hfov_deg)

    def scene_settings(self) -> SceneSettings:
        r = self.radar
        return SceneSettings(num_classes=r.num_classes, max_targets=r.max_targets,
                             min_separation_m=r.min_separation_m, noise_floor=r.noise_floor)

    def box_coder(self) -> BoxCoder:
        return BoxCoder(0.0, self.radar.range_max_m, math.radians(self.radar.azimuth_fov_deg) / 2.0)

    def detector(self) -> DetectorConfig:
        m = self.model
        return DetectorConfig(
            image_size=tuple(self.image.size), cube_dims=tuple(self.radar.dims),
            num_classes=self.radar.num_classes, encoder_widths=m.encoder_widths,
            image_strides=m.image_strides, ra_strides=m.ra_strides, ea_strides=m.ea_strides,
            fpn=self.fpn, wa_moe=self.wa_moe, gsa=self.gsa, num_queries=m.num_queries,
            iterations=m.iterations, samples=m.samples, pool_attention=m.pool_attention,
        )


# ---------- value codecs ----------
def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _parse_scalar(text: str, kind: type, key: str) -> Any:
    text = text.strip()
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigurationError(f"{key}: expected true/false, got {text!r}")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {text!r}") from None
    return text


def _parse_value(text: str, annotation: Any, key: str) -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if text.strip().lower() == "none":
            return None
        return _parse_value(text, inner[0], key)
    if origin is tuple:
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_parse_scalar(p, args[0], key) for p in parts)
        if len(parts) != len(args):
            raise ConfigurationError(f"{key}: expected {len(args)} comma-separated values, got {len(parts)}")
        return tuple(_parse_scalar(p, a, key) for p, a in zip(parts, args))
    return _parse_scalar(text, annotation, key)


def _sections() -> Dict[str, type]:
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(RunConfig) if dataclasses.is_dataclass(hints[f.name])}


def _field_types(section: type) -> Dict[str, Any]:
    hints = typing.get_type_hints(section)
    return {f.name: hints[f.name] for f in dataclasses.fields(section)}


def _split_line(line: str, where: str) -> Optional[Tuple[str, str]]:
    stripped = line.split("#", 1)[0].strip()
    if not stripped:
        return None
    if "=" not in stripped:
        raise ConfigurationError(f"{where}: expected 'key = value', got {line.strip()!r}")
    key, value = stripped.split("=", 1)
    return key.strip(), value.strip()


def apply_settings(cfg: RunConfig, settings: Iterable[Tuple[str, str, str]]) -> RunConfig:
    """
    Apply (key, raw value, location) triples to a config.

    Raises:
        ConfigurationError: Unknown key, malformed value or an invalid section.
    """
    sections = _sections()
    updates: Dict[str, Dict[str, Any]] = {}
    top: Dict[str, Any] = {}
    for key, raw, where in settings:
        if "." not in key:
            if key != "seed":
                raise ConfigurationError(f"{where}: unknown key {key!r}")
            top[key] = _parse_value(raw, int, f"{where}: {key}")
            continue
        section, name = key.split(".", 1)
        if section not in sections:
            raise ConfigurationError(f"{where}: unknown section {section!r} in key {key!r}")
        types = _field_types(sections[section])
        if name not in types:
            raise ConfigurationError(f"{where}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = _parse_value(raw, types[name], f"{where}: {key}")
    replaced = {}
    for section, values in updates.items():
        try:
            replaced[section] = dataclasses.replace(getattr(cfg, section), **values)
        except ConfigurationError as e:
            raise ConfigurationError(f"[{section}] {e}") from None
    return dataclasses.replace(cfg, **replaced, **top)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse `key = value` lines on top of the defaults."""
    settings = []
    for number, line in enumerate(text.splitlines(), start=1):
        where = f"{source}:{number}"
        pair = _split_line(line, where)
        if pair is not None:
            settings.append((pair[0], pair[1], where))
    return apply_settings(RunConfig(), settings)


def serialize_config(cfg: RunConfig) -> str:
    """Every field as `section.field = value`; parse_config inverts it exactly."""
    lines = []
    for section in _sections():
        lines.append(f"# {section}")
        values = getattr(cfg, section)
        for f in dataclasses.fields(values):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(values, f.name))}")
        lines.append("")
    lines.append(f"seed = {cfg.seed}")
    return "\n".join(lines) + "\n"


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Read a config file, apply `key=value` overrides and the seed environment variable.

    Args:
        path: Config file (None = defaults).
        overrides: Command-line `key=value` strings, applied after the file.
        environ: Environment mapping (defaults to os.environ).

    Raises:
        ConfigurationError: Malformed file, override or value.
        OSError: The file cannot be read.
    """
    cfg = RunConfig()
    if path:
        with open(path, "r", encoding="utf-8") as f:
            cfg = parse_config(f.read(), source=path)
    settings = []
    for override in overrides:
        if "=" not in override:
            raise ConfigurationError(f"override {override!r} must look like key=value")
        key, value = override.split("=", 1)
        settings.append((key.strip(), value.strip(), f"--override {override}"))
    cfg = apply_settings(cfg, settings)
    environ = os.environ if environ is None else environ
    seed = environ.get(SEED_ENV)
    if seed not in (None, ""):
        try:
            cfg = dataclasses.replace(cfg, seed=int(seed))
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
        logger.info("Seed overridden from %s: %d", SEED_ENV, cfg.seed)
    return cfg
