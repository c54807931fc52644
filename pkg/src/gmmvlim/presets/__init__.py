"""Named experiment configurations shipped with the package."""

import json
from importlib import resources

from ..core import ExperimentConfig, config_from_dict
from ..errors import ConfigError

PRESETS = ("two-cylinders", "foam-die-int", "rect-metal", "u-shape", "foam-met-ext")


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError([("UNKNOWN_PRESET", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")])
    return resources.files(__name__).joinpath(f"{name}.json")


def preset_dict(name: str) -> dict:
    return json.loads(preset_path(name).read_text())


def load_preset(name: str) -> ExperimentConfig:
    return config_from_dict(preset_dict(name), name=name)
