"""Run configuration: a flat ``key = value`` text file covering data
generation, training, inference and retrieval.  Defaults follow the
training and pipeline settings the experiments use (5000 samples per
epoch, lambda 0.5, 20% validation, stride 10, pyramid scales
0.5/0.7/1.0, context threshold 0.4, 500 retrieved regions)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .network import NetworkConfig
from .pipeline import MISSING, OUT_OF_CONTEXT
from .world import OracleDetectorConfig, WorldConfig


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_ints(s):
    return tuple(int(v) for v in s.split(",")) if s.strip() else ()


def _parse_floats(s):
    return tuple(float(v) for v in s.split(",")) if s.strip() else ()


@dataclass
class RunConfig:
    seed: int = 0
    train_count: int = 60
    test_count: int = 40

    world: WorldConfig = field(default_factory=WorldConfig)
    detector: OracleDetectorConfig = field(default_factory=OracleDetectorConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)

    epochs: int = 20
    samples_per_epoch: int = 5000
    lam: float = 0.5
    val_fraction: float = 0.2
    patience: int = 5

    stride: int = 10
    mask_widths: tuple = ()  # empty: scaled from the canonical {50, 70, 100}
    scales: tuple = (0.5, 0.7, 1.0)
    sensitivity_stride: int = 2
    sensitivity_samples: int = 20
    sensitivity_epsilon: float = 0.1

    threshold: float = 0.4
    region_side: int = 48
    max_count: int = 500
    mode: str = MISSING
    det_score_threshold: float = 0.5

    mining: bool = False
    mine_fraction: float = 0.1

    def effective_mask_widths(self):
        if self.mask_widths:
            return self.mask_widths
        side = self.network.input_side
        return tuple(max(1, int(round(w * side / 224.0))) for w in (50, 70, 100))


# key -> (section attr or None, field name, parser)
_KEYS = {
    "seed": (None, "seed", int),
    "data.train_count": (None, "train_count", int),
    "data.test_count": (None, "test_count", int),

    "world.image_size": ("world", "image_size", int),
    "world.channels": ("world", "channels", int),
    "world.sites_per_image": ("world", "sites_per_image", int),
    "world.placement_prob": ("world", "placement_prob", float),
    "world.object_size": ("world", "object_size", int),
    "world.size_jitter": ("world", "size_jitter", int),
    "world.texture_noise": ("world", "texture_noise", float),
    "world.band_width": ("world", "band_width", int),
    "world.junction_jitter": ("world", "junction_jitter", int),
    "world.offsite_rate": ("world", "offsite_rate", float),
    "world.seed": ("world", "seed", int),

    "detector.false_negative_rate": ("detector", "false_negative_rate", float),
    "detector.false_positive_rate": ("detector", "false_positive_rate", float),
    "detector.localization_jitter": ("detector", "localization_jitter", int),
    "detector.seed": ("detector", "seed", int),

    "network.input_side": ("network", "input_side", int),
    "network.channels": ("network", "channels", int),
    "network.filters": ("network", "filters", _parse_ints),
    "network.head_width": ("network", "head_width", int),
    "network.name": ("network", "name", str),
    "network.drop_block": ("network", "drop_block", float),
    "network.drop_head": ("network", "drop_head", float),

    "train.epochs": (None, "epochs", int),
    "train.samples_per_epoch": (None, "samples_per_epoch", int),
    "train.lambda": (None, "lam", float),
    "train.val_fraction": (None, "val_fraction", float),
    "train.patience": (None, "patience", int),

    "infer.stride": (None, "stride", int),
    "infer.mask_widths": (None, "mask_widths", _parse_ints),
    "infer.scales": (None, "scales", _parse_floats),
    "infer.sensitivity_stride": (None, "sensitivity_stride", int),
    "infer.sensitivity_samples": (None, "sensitivity_samples", int),
    "infer.sensitivity_epsilon": (None, "sensitivity_epsilon", float),

    "pipeline.threshold": (None, "threshold", float),
    "pipeline.d": (None, "region_side", int),
    "pipeline.max_count": (None, "max_count", int),
    "pipeline.mode": (None, "mode", str),
    "pipeline.det_score_threshold": (None, "det_score_threshold", float),

    "mining.enabled": (None, "mining", _parse_bool),
    "mining.fraction": (None, "mine_fraction", float),
}


def parse_config(text):
    """Parse a key/value config document into a RunConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, name, parser = _KEYS[key]
        try:
            values[(section, name)] = parser(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc

    cfg = RunConfig()
    sections = {"world": {}, "detector": {}, "network": {}}
    for (section, name), value in values.items():
        if section is None:
            setattr(cfg, name, value)
        else:
            sections[section][name] = value
    try:
        if sections["world"]:
            cfg.world = WorldConfig(**{**_asdict(cfg.world), **sections["world"]})
        if sections["detector"]:
            cfg.detector = OracleDetectorConfig(
                **{**_asdict(cfg.detector), **sections["detector"]})
        if sections["network"]:
            cfg.network = NetworkConfig(
                **{**_asdict(cfg.network), **sections["network"]})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.mode not in (MISSING, OUT_OF_CONTEXT):
        raise ConfigError(f"pipeline.mode must be {MISSING} or {OUT_OF_CONTEXT}")
    return cfg


def _asdict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def dump_config(cfg):
    """Render a RunConfig back to the text format (every field, so a run
    manifest fully records its settings)."""
    lines = []
    for key, (section, name, parser) in _KEYS.items():
        obj = cfg if section is None else getattr(cfg, section)
        value = getattr(obj, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
