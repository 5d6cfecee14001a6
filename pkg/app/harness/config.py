import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import ValidationError

from app.core.exceptions import ConfigurationError
from app.harness.schemas import ExperimentConfig, Method

logger = logging.getLogger(__name__)

PRESETS: dict[str, dict] = {
    "paper": {
        "system": {
            "area_x_min": -50.0,
            "area_y_min": -50.0,
            "area_width": 100.0,
            "area_height": 100.0,
            "resolution": 5.0,
            "num_antennas": 64,
            "num_subcarriers": 1024,
            "subcarrier_spacing": 30e3,
            "pilot_spacing": 32,
            "bs_x": -50.0,
            "bs_y": 0.0,
            "user_x": 50.0,
            "user_y": 0.0,
            "sigma_p2": 1.0,
        },
        "scene": {"num_targets": 9, "num_scatterers": 10, "overlap": 5},
        "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0], "trials": 100},
    },
    "quick": {
        "system": {
            "area_x_min": -25.0,
            "area_y_min": -25.0,
            "area_width": 50.0,
            "area_height": 50.0,
            "resolution": 10.0,
            "num_antennas": 16,
            "num_subcarriers": 256,
            "subcarrier_spacing": 30e3,
            "pilot_spacing": 32,
            "bs_x": -25.0,
            "bs_y": 0.0,
            "user_x": 25.0,
            # keeps the direct path off every grid row
            "user_y": 5.0,
            "sigma_p2": 1.0,
        },
        # five entities on a 5 x 5 grid; two cells leaves too few offset placements
        "scene": {
            "num_targets": 3,
            "num_scatterers": 4,
            "overlap": 2,
            "min_separation_cells": 1.5,
        },
        "sweep": {"snr_db": [0.0, 10.0, 20.0, 30.0, 40.0], "trials": 20},
    },
}


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build(data: dict, source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration ({source}): {e}") from e


def read_config_file(path: str | Path) -> dict:
    """
    Parse a sectioned key-value config file.

    Args:
        path: File path

    Returns:
        Raw section dictionary

    Raises:
        ConfigurationError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"cannot parse {path}: {e}") from e


def load_config(
    preset: str | None = None,
    path: str | Path | None = None,
    overrides: dict | None = None,
    seed: int | None = None,
    methods: list[str] | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """
    Resolve the experiment configuration: preset, then file, then explicit values.

    Args:
        preset: Preset name ("paper" or "quick")
        path: Optional config file
        overrides: Section-wise overrides applied after the file
        seed: Master seed override
        methods: Method list override
        workers: Worker count override

    Returns:
        Validated configuration

    Raises:
        ConfigurationError: Unknown preset, unreadable file, unknown keys or invalid values
    """
    data: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(
                f"unknown preset '{preset}'; choose one of {', '.join(sorted(PRESETS))}"
            )
        data = _merge(data, PRESETS[preset])
    if path is not None:
        data = _merge(data, read_config_file(path))
    if overrides:
        data = _merge(data, overrides)

    sweep = {}
    if seed is not None:
        sweep["seed"] = seed
    if methods is not None:
        known = {method.value for method in Method}
        unknown = [name for name in methods if name not in known]
        if unknown:
            raise ConfigurationError(
                f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(sorted(known))}"
            )
        sweep["methods"] = methods
    if workers is not None:
        sweep["workers"] = workers
    if sweep:
        data = _merge(data, {"sweep": sweep})

    config = _build(data, path or preset or "defaults")
    scene = config.scene
    if scene.overlap > min(scene.num_targets, scene.num_scatterers):
        raise ConfigurationError(
            f"scene overlap {scene.overlap} exceeds min(K, L) = "
            f"{min(scene.num_targets, scene.num_scatterers)}"
        )
    logger.debug(f"Resolved configuration from preset={preset} file={path}")
    return config


def describe_keys() -> dict[str, dict[str, str]]:
    """
    Documentation of every config key, by section.
    """
    described = {}
    for section, field in ExperimentConfig.model_fields.items():
        model = field.annotation
        described[section] = {
            (sub.alias or name): sub.description or ""
            for name, sub in model.model_fields.items()
        }
    return described
