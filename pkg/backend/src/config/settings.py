"""
Experiment configuration management module.
Handles the config directory location, JSON config loading with strict
validation, command-line overrides and atomic saving.
"""

import copy
import json
import logging
import os
import platform
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from backend.src.config import constants
from backend.src.simulation.errors import ConfigError
from backend.src.simulation.noise import DeviceParams, QubitParams
from backend.src.simulation.schedule import Timing

logger = logging.getLogger("settings")

# Define config directory based on platform
if platform.system() == "Windows":
    # Windows: Use AppData\Roaming
    CONFIG_DIR = os.path.join(os.environ.get("APPDATA", os.path.expanduser("~")), constants.APP_NAME)
else:
    # Linux: Use ~/.config/ParityStabilizer/
    CONFIG_DIR = os.path.join(os.path.expanduser("~"), ".config", constants.APP_NAME)

DEFAULT_CONFIG_FILE = os.path.join(CONFIG_DIR, constants.CONFIG_FILENAME)

# Leaves whose default is null, with the type they take when set
NULLABLE_FIELDS = {
    "experiment.rounds": int,
    "experiment.mode": str,
    "experiment.sequence": list,
    "output.path": str,
}


def default_config_dict() -> Dict[str, Any]:
    """
    Full configuration tree with the measured device defaults.

    Returns:
        Dict[str, Any]: Fresh nested dictionary (safe to modify)
    """
    return {
        "device": {
            **{name: dict(values) for name, values in constants.QUBIT_DEFAULTS.items()},
            "t2_source": "echo",
            "j_d1a_khz": constants.J_D1A_KHZ,
            "j_d2a_khz": constants.J_D2A_KHZ,
            "readout": dict(constants.READOUT_DEFAULTS),
            "stark_d1_deg": constants.STARK_D1_DEG,
            "stark_d2_deg": constants.STARK_D2_DEG,
            "stark_compensation": True,
            "stark_overcorrection_deg": 0.0,
            "readout_dephasing_prob": constants.READOUT_DEPHASING_PROB,
        },
        "timing": {
            "single_qubit_gate_ns": constants.SINGLE_QUBIT_GATE_NS,
            "flux_d1a_ns": constants.FLUX_D1A_NS,
            "flux_ad2_ns": constants.FLUX_AD2_NS,
            "buffer_ns": constants.BUFFER_NS,
            "readout_pulse_ns": constants.READOUT_PULSE_NS,
            "feedback_delay_ns": constants.FEEDBACK_DELAY_NS,
            "cpmg_count": constants.CPMG_COUNT,
            "ideal_cpmg_pulses": False,
        },
        "experiment": {
            "name": "custom",
            "rounds": None,
            "mode": None,
            "sequence": None,
            "target": "phi_plus",
            "initial_state": "prepared",
            "noiseless": False,
        },
        "analysis": {
            "shots": 0,
            "seed": constants.DEFAULT_SEED,
            "pauli_sets": False,
        },
        "output": {
            "path": None,
            "format": "csv",
        },
    }


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "custom"
    rounds: Optional[int] = None
    mode: Optional[str] = None
    sequence: Optional[Tuple[str, ...]] = None
    target: str = "phi_plus"
    initial_state: str = "prepared"
    noiseless: bool = False


@dataclass(frozen=True)
class AnalysisSpec:
    shots: int = 0
    seed: int = constants.DEFAULT_SEED
    pauli_sets: bool = False


@dataclass(frozen=True)
class OutputSpec:
    path: Optional[str] = None
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Validated configuration of one simulator invocation.

    Attributes:
        device: Device parameters handed to the noise model
        timing: Pulse durations handed to the schedule compiler
        experiment: Preset name and protocol switches
        analysis: Tomography mode (exact when shots = 0) and seed
        output: Destination and format of the result table
        raw: The merged configuration tree, echoed into JSON output
    """

    device: DeviceParams
    timing: Timing
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    raw: Dict[str, Any] = field(default_factory=default_config_dict, compare=False, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)


def _type_name(expected) -> str:
    return {float: "a number", int: "an integer", bool: "a boolean",
            str: "a string", list: "a list"}.get(expected, expected.__name__)


def _check_leaf(path: str, value: Any, default: Any) -> Any:
    expected = NULLABLE_FIELDS.get(path) if default is None else type(default)
    if value is None:
        if path in NULLABLE_FIELDS:
            return None
        raise ConfigError(f"{path} must not be null")
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be {_type_name(float)}, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be {_type_name(int)}, got {value!r}")
        return value
    if not isinstance(value, expected):
        raise ConfigError(f"{path} must be {_type_name(expected)}, got {value!r}")
    return value


def _merge(defaults: Dict[str, Any], overrides: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Overlay ``overrides`` on ``defaults``, rejecting unknown keys and type mismatches."""
    if not isinstance(overrides, Mapping):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, f"{path}.")
        else:
            merged[key] = _check_leaf(path, value, defaults[key])
    return merged


def _choice(path: str, value: Optional[str], choices) -> None:
    if value is not None and value not in choices:
        raise ConfigError(f"{path} must be one of {', '.join(choices)}, got '{value}'")


def build_config(tree: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate a configuration tree and build the typed configuration.

    Args:
        tree: Partial or complete configuration; missing keys take defaults

    Raises:
        ConfigError: Naming the first offending dotted field
    """
    merged = _merge(default_config_dict(), tree)
    device = merged["device"]
    readout = device["readout"]
    params = DeviceParams(
        d1=QubitParams(**device["d1"]),
        a=QubitParams(**device["a"]),
        d2=QubitParams(**device["d2"]),
        t2_source=device["t2_source"],
        j_d1a_khz=device["j_d1a_khz"],
        j_d2a_khz=device["j_d2a_khz"],
        p0_given_0=readout["p0_given_0"],
        p1_given_0=readout["p1_given_0"],
        p0_given_1=readout["p0_given_1"],
        p1_given_1=readout["p1_given_1"],
        stark_d1_deg=device["stark_d1_deg"],
        stark_d2_deg=device["stark_d2_deg"],
        stark_compensation=device["stark_compensation"],
        stark_overcorrection_deg=device["stark_overcorrection_deg"],
        readout_dephasing_prob=device["readout_dephasing_prob"],
    )
    # device.readout.* keys are flat fields on DeviceParams
    try:
        params.validate()
    except ConfigError as e:
        message = e.message
        for key in readout:
            message = message.replace(f"device.{key}", f"device.readout.{key}")
        raise ConfigError(message)

    timing = Timing(**merged["timing"]).validate()

    exp = merged["experiment"]
    _choice("experiment.name", exp["name"], constants.EXPERIMENTS)
    _choice("experiment.mode", exp["mode"], constants.MODES)
    _choice("experiment.target", exp["target"], constants.TARGETS)
    _choice("experiment.initial_state", exp["initial_state"], constants.INITIAL_STATES)
    if exp["rounds"] is not None and exp["rounds"] < 1:
        raise ConfigError(f"experiment.rounds must be >= 1, got {exp['rounds']}")
    sequence = exp["sequence"]
    if sequence is not None:
        if not sequence:
            raise ConfigError("experiment.sequence must not be empty")
        for item in sequence:
            if not isinstance(item, str) or item.upper() not in constants.BASES:
                raise ConfigError(f"experiment.sequence entries must be ZZ or XX, got {item!r}")
        sequence = tuple(item.upper() for item in sequence)

    analysis = merged["analysis"]
    if analysis["shots"] < 0:
        raise ConfigError(f"analysis.shots must be >= 0, got {analysis['shots']}")
    _choice("output.format", merged["output"]["format"], constants.OUTPUT_FORMATS)

    return ExperimentConfig(
        device=params,
        timing=timing,
        experiment=ExperimentSpec(
            name=exp["name"], rounds=exp["rounds"], mode=exp["mode"], sequence=sequence,
            target=exp["target"], initial_state=exp["initial_state"], noiseless=exp["noiseless"],
        ),
        analysis=AnalysisSpec(**analysis),
        output=OutputSpec(**merged["output"]),
        raw=merged,
    )


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """
    Load and validate a JSON configuration file.

    Args:
        path: Config file; when omitted the per-user config file is used if it
              exists, otherwise the defaults

    Returns:
        ExperimentConfig: Validated configuration with defaults filled in

    Raises:
        ConfigError: Missing file, malformed JSON or a schema violation
    """
    if path is None:
        if not os.path.exists(DEFAULT_CONFIG_FILE):
            logger.debug("[Settings] No config file given, using defaults")
            return build_config({})
        path = DEFAULT_CONFIG_FILE
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}")
    if not text.strip():
        tree = {}
    else:
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    logger.debug(f"[Settings] Loaded config from {path}")
    return build_config(tree)


def apply_overrides(config: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """
    Return a new configuration with dotted-key overrides applied.

    Args:
        config: Base configuration
        overrides: e.g. ``{"experiment.rounds": 4, "device.j_d2a_khz": 0}``;
                   ``None`` values are skipped

    Raises:
        ConfigError: Unknown key or invalid value
    """
    tree = config.to_dict()
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config key '{dotted}'")
            node = node[part]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise ConfigError(f"unknown config key '{dotted}'")
        node[parts[-1]] = value
    return build_config(tree)


def parse_value(text: str) -> Any:
    """Interpret a command-line value as JSON, falling back to a plain string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def save_config(config: ExperimentConfig, path: Optional[str] = None) -> str:
    """
    Write the configuration tree as JSON.

    Returns:
        str: Path written to
    """
    path = path or DEFAULT_CONFIG_FILE
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    # Write to a temporary file first, then rename to avoid corruption
    temp_file = f"{path}.tmp"
    with open(temp_file, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(temp_file, path)
    logger.info(f"[Settings] Saved config to {path}")
    return path


def changed_fields(config: ExperimentConfig) -> List[str]:
    """Dotted keys whose value differs from the defaults."""
    changes = []

    def walk(current, default, prefix):
        for key, value in current.items():
            if isinstance(value, dict):
                walk(value, default[key], f"{prefix}{key}.")
            elif value != default[key]:
                changes.append(f"{prefix}{key}")

    walk(config.raw, default_config_dict(), "")
    return changes
