"""Experiment configuration and the dotted-key config file format.

A config file holds one ``key = value`` pair per line, ``#`` starts a
comment.  Values are Python literals (numbers, lists, quoted strings,
``true``/``false``); anything else is taken as a bare string::

    model.variant = hetero_deep
    model.layers = 3
    model.delays = [1, 3, 5]
    layer.size = 2000
    grid.layer.size = [500, 1000, 2000]

Keys under ``grid.`` name the axes of a grid search.
"""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig, FrameSpec
from .reservoir import VARIANTS, LayerConfig, SubGroupPartition, build_model, layer_seed

# dotted key -> ExperimentConfig field
KEYS = {
    "model.variant": "variant",
    "model.layers": "n_layers",
    "model.delays": "delays",
    "model.group_sizes": "group_sizes",
    "layer.size": "size",
    "layer.rho": "spectral_radius",
    "layer.leak": "leak_rate",
    "layer.input_scale": "input_scale",
    "layer.bias_scale": "bias_scale",
    "layer.connectivity": "connectivity",
    "layer.leak_on_activation": "leak_on_activation",
    "features.context_width": "context_width",
    "features.context_center": "context_center",
    "features.frame_ms": "frame_ms",
    "features.overlap_ms": "overlap_ms",
    "features.n_filters": "n_filters",
    "readout.gamma": "gamma",
    "run.washout": "washout",
    "run.n_seeds": "n_seeds",
    "run.master_seed": "master_seed",
    "run.n_classes": "n_classes",
}
DATA_KEYS = ("data.manifest", "data.train_n", "data.test_n", "data.val_fraction", "data.split_seed")
DEFAULT_DELAYS = (1, 3, 5)


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key or not value.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def parse_override(item: str) -> tuple[str, object]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
    return key.strip(), parse_value(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to build, train and score one model family."""

    variant: str = "shallow"
    n_layers: int = 1
    delays: tuple = ()
    group_sizes: tuple = ()
    size: int = 500
    spectral_radius: float = 0.3
    leak_rate: float = 0.5
    input_scale: float = 0.1
    bias_scale: float | None = None
    connectivity: float = 0.1
    leak_on_activation: bool = True
    context_width: int = 14
    context_center: int | None = None
    frame_ms: float = 23.0
    overlap_ms: float = 12.5
    n_filters: int = 18
    gamma: float = 1e-4
    washout: int = 0
    n_seeds: int = 5
    master_seed: int = 0
    n_classes: int = 35

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if self.n_seeds < 1:
            raise ConfigError(f"run.n_seeds must be at least 1, got {self.n_seeds}")
        if self.n_classes < 2:
            raise ConfigError(f"run.n_classes must be at least 2, got {self.n_classes}")
        if self.n_layers < 1:
            raise ConfigError(f"model.layers must be at least 1, got {self.n_layers}")
        if self.variant in ("shallow", "hetero_shallow") and self.n_layers != 1:
            raise ConfigError(f"{self.variant} models have exactly one layer")
        if self.context_width < 1:
            raise ConfigError("features.context_width must be at least 1")
        if self.washout < 0:
            raise ConfigError("run.washout must be nonnegative")
        if self.gamma < 0:
            raise ConfigError("readout.gamma must be nonnegative")
        if self.variant == "hetero_deep" and self.delays and len(self.delays) != self.n_layers:
            raise ConfigError(f"model.delays has {len(self.delays)} entries for {self.n_layers} layers")
        if self.group_sizes and sum(self.group_sizes) != self.size:
            raise ConfigError(f"model.group_sizes sum to {sum(self.group_sizes)}, layer.size is {self.size}")
        # validates frame geometry and every layer hyperparameter early
        self.frame_spec()
        self.layer_configs()

    # -- derived objects -------------------------------------------------------

    @property
    def center(self) -> int:
        return self.context_width // 2 if self.context_center is None else self.context_center

    @property
    def effective_delays(self) -> tuple:
        if self.variant == "hetero_shallow":
            return self.delays or DEFAULT_DELAYS
        if self.variant == "hetero_deep":
            return self.delays or (DEFAULT_DELAYS if self.n_layers == 3 else (0,) * self.n_layers)
        return ()

    @property
    def effective_bias_scale(self) -> float:
        if self.bias_scale is not None:
            return self.bias_scale
        return 0.0 if self.variant in ("shallow", "hetero_shallow") else 0.1

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(self.frame_ms, self.overlap_ms)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(frame=self.frame_spec(), n_filters=self.n_filters)

    def layer_configs(self, seed: int | None = None) -> list[LayerConfig]:
        seed = self.master_seed if seed is None else seed
        delays = self.effective_delays if self.variant == "hetero_deep" else (0,) * self.n_layers
        return [
            LayerConfig(
                size=self.size,
                spectral_radius=self.spectral_radius,
                leak_rate=self.leak_rate,
                input_scale=self.input_scale,
                bias_scale=self.effective_bias_scale,
                connectivity=self.connectivity,
                delay=delays[i],
                seed=layer_seed(seed, i),
                leak_on_activation=self.leak_on_activation,
            )
            for i in range(self.n_layers)
        ]

    def partition(self) -> SubGroupPartition | None:
        if self.variant != "hetero_shallow":
            return None
        delays = self.effective_delays
        if self.group_sizes:
            if len(self.group_sizes) != len(delays):
                raise ConfigError("model.group_sizes and model.delays differ in length")
            return SubGroupPartition(self.group_sizes, delays)
        return SubGroupPartition.equal(self.size, delays)

    def n_inputs(self) -> int:
        return self.n_filters * self.context_width

    def build_reservoir(self, seed: int | None = None, n_in: int | None = None):
        return build_model(
            self.variant,
            self.n_inputs() if n_in is None else n_in,
            self.layer_configs(seed),
            self.partition(),
        )

    # -- flat (dotted-key) view -------------------------------------------------

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_keys(self, flat: dict) -> "ExperimentConfig":
        changes = {}
        for key, value in flat.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            changes[KEYS[key]] = value
        try:
            return self.replace(**changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc

    def to_flat(self) -> dict:
        out = {}
        for key, name in KEYS.items():
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = ";".join(str(v) for v in value)
            out[key] = "" if value is None else value
        return out


def split_config(flat: dict) -> tuple[ExperimentConfig, dict, dict]:
    """Separate a parsed file into (experiment config, data settings, grid axes)."""
    exp, data, grid = {}, {}, {}
    for key, value in flat.items():
        if key.startswith("grid."):
            axis = key[len("grid."):]
            if axis not in KEYS:
                raise ConfigError(f"grid axis {axis!r} is not a config key")
            values = value if isinstance(value, list) else [value]
            if not values:
                raise ConfigError(f"grid axis {axis!r} has no values")
            grid[axis] = values
        elif key.startswith("data."):
            if key not in DATA_KEYS:
                raise ConfigError(f"unknown data key {key!r}")
            data[key] = value
        else:
            exp[key] = value
    return ExperimentConfig().with_keys(exp), data, grid
