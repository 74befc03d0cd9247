"""
INI run configuration.

Sections [scenario], [stage1], [stage2] and [run]; every key is optional
and defaults to the built-in scene and filter settings. Unknown sections or
keys are rejected.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

from ..engine.errors import ConfigError, LaguerreError
from ..engine.pipeline import PipelineConfig, StageOneConfig, StageTwoConfig
from ..scenario.generator import ScenarioConfig

MATCHED_MODES = ("none", "clairvoyant", "grid3", "grid5")


def _bool(text: str) -> bool:
    states = configparser.ConfigParser.BOOLEAN_STATES
    key = str(text).strip().lower()
    if key not in states:
        raise ValueError(f"not a boolean: {text!r}")
    return states[key]


def _optional_float(text: str) -> Optional[float]:
    text = str(text).strip()
    return None if text in ("", "none") else float(text)


_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "scenario": {
        "frames": int, "width": int, "height": int, "n_components": int, "f_max": float,
        "clutter_amplitude": float, "dc": float, "v_clt_min": float, "v_clt_max": float,
        "clutter_speed": float, "clutter_freq": float, "clutter": _bool, "target": _bool,
        "i_max": float, "psf_std": float, "v_tgt_min": float, "v_tgt_max": float,
        "final_x": float, "final_y": float, "target_vx": _optional_float, "target_vy": _optional_float,
        "noise_std": float, "input_snr_db": _optional_float, "seed": int,
    },
    "stage1": {
        "sigma_x": float, "sigma_y": float, "sigma_z": float, "q_z": int, "degree": int, "bypass": _bool,
    },
    "stage2": {
        "sigma_x": float, "sigma_y": float, "sigma_z": float, "degree": int, "omega": str,
        "fallback_b0": _bool, "normalize": _bool,
    },
    "run": {
        "workers": int, "velocity_mode": str, "compute_sse": _bool, "pgm": _bool,
        "matched": str, "write_frames": _bool,
    },
}

# sweep key -> (section, key)
SWEEP_KEYS: dict[str, tuple[str, str]] = {
    "qz": ("stage1", "q_z"),
    "psf": ("scenario", "psf_std"),
    "clutter_speed": ("scenario", "clutter_speed"),
    "clutter_freq": ("scenario", "clutter_freq"),
    "noise": ("scenario", "noise_std"),
    "stage1_degree": ("stage1", "degree"),
    "seed": ("scenario", "seed"),
}


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Everything a simulate/run/sweep command needs."""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    pgm: bool = False
    matched: str = "none"
    write_frames: bool = True

    def __post_init__(self) -> None:
        if self.matched not in MATCHED_MODES:
            raise ConfigError(f"matched must be one of {MATCHED_MODES}, got {self.matched!r}")

    def to_sections(self) -> dict[str, dict[str, Any]]:
        sc, s1, s2, pl = self.scenario, self.pipeline.stage1, self.pipeline.stage2, self.pipeline
        return {
            "scenario": {
                "frames": sc.frames, "width": sc.width, "height": sc.height,
                "n_components": sc.n_components, "f_max": sc.f_max,
                "clutter_amplitude": sc.clutter_amplitude, "dc": sc.dc,
                "v_clt_min": sc.v_clt_range[0], "v_clt_max": sc.v_clt_range[1],
                "clutter_speed": sc.clutter_speed, "clutter_freq": sc.clutter_freq,
                "clutter": sc.clutter, "target": sc.target, "i_max": sc.i_max, "psf_std": sc.psf_std,
                "v_tgt_min": sc.v_tgt_range[0], "v_tgt_max": sc.v_tgt_range[1],
                "final_x": sc.final_position[0], "final_y": sc.final_position[1],
                "target_vx": None if sc.target_velocity is None else sc.target_velocity[0],
                "target_vy": None if sc.target_velocity is None else sc.target_velocity[1],
                "noise_std": sc.noise_std, "input_snr_db": None, "seed": sc.seed,
            },
            "stage1": {
                "sigma_x": s1.sigma_x, "sigma_y": s1.sigma_y, "sigma_z": s1.sigma_z,
                "q_z": s1.q_z, "degree": s1.degree, "bypass": s1.bypass,
            },
            "stage2": {
                "sigma_x": s2.sigma_x, "sigma_y": s2.sigma_y, "sigma_z": s2.sigma_z,
                "degree": s2.degree, "omega": s2.omega, "fallback_b0": s2.fallback_b0,
                "normalize": s2.normalize,
            },
            "run": {
                "workers": pl.workers, "velocity_mode": pl.velocity_mode, "compute_sse": pl.compute_sse,
                "pgm": self.pgm, "matched": self.matched, "write_frames": self.write_frames,
            },
        }

    @staticmethod
    def from_sections(sections: dict[str, dict[str, Any]]) -> "RunConfig":
        """
        Build a config from (possibly partial) sections of raw values.
        Raises:
            ConfigError: On unknown sections or keys, or values that fail validation.
        """
        values = RunConfig().to_sections()
        for section, entries in sections.items():
            if section not in _SCHEMA:
                raise ConfigError(f"Unknown config section [{section}]")
            for key, raw in entries.items():
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"Unknown key '{key}' in [{section}]")
                values[section][key] = _convert(section, key, raw)
        try:
            return _build(values)
        except LaguerreError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def _convert(section: str, key: str, raw: Any) -> Any:
    if raw is None:
        return None
    conv = _SCHEMA[section][key]
    try:
        if isinstance(raw, str) or conv in (_bool, _optional_float, str):
            return conv(raw if isinstance(raw, str) else str(raw))
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid value {raw!r} for [{section}] {key}: {exc}") from exc


def _build(v: dict[str, dict[str, Any]]) -> RunConfig:
    sc = v["scenario"]
    velocity = None
    if sc["target_vx"] is not None or sc["target_vy"] is not None:
        if sc["target_vx"] is None or sc["target_vy"] is None:
            raise ConfigError("target_vx and target_vy must be given together")
        velocity = (sc["target_vx"], sc["target_vy"])
    scenario = ScenarioConfig(
        frames=sc["frames"], width=sc["width"], height=sc["height"], n_components=sc["n_components"],
        f_max=sc["f_max"], clutter_amplitude=sc["clutter_amplitude"], dc=sc["dc"],
        v_clt_range=(sc["v_clt_min"], sc["v_clt_max"]), clutter_speed=sc["clutter_speed"],
        clutter_freq=sc["clutter_freq"], clutter=sc["clutter"], target=sc["target"],
        i_max=sc["i_max"], psf_std=sc["psf_std"], v_tgt_range=(sc["v_tgt_min"], sc["v_tgt_max"]),
        final_position=(sc["final_x"], sc["final_y"]), target_velocity=velocity,
        noise_std=sc["noise_std"], seed=sc["seed"],
    )
    if sc["input_snr_db"] is not None:
        scenario = scenario.with_input_snr(sc["input_snr_db"])
    run = v["run"]
    pipeline = PipelineConfig(
        stage1=StageOneConfig(**v["stage1"]),
        stage2=StageTwoConfig(**v["stage2"]),
        workers=run["workers"],
        velocity_mode=run["velocity_mode"],
        compute_sse=run["compute_sse"],
    )
    return RunConfig(scenario=scenario, pipeline=pipeline, pgm=run["pgm"],
                     matched=run["matched"], write_frames=run["write_frames"])


def load_config(path: str | Path | None) -> RunConfig:
    """
    Read an INI file; None gives the defaults.
    Raises:
        ConfigError: On syntax errors, unknown keys or invalid values.
        OSError: If the file cannot be read.
    """
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with Path(path).open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_sections({s: dict(parser.items(s)) for s in parser.sections()})


def dump_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser(interpolation=None)
    for section, entries in cfg.to_sections().items():
        parser[section] = {k: "" if v is None else str(v) for k, v in entries.items()}
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)
    return path


def apply_override(cfg: RunConfig, key: str, value: str) -> RunConfig:
    """
    Copy of cfg with one sweep key replaced.
    Raises:
        ConfigError: If the key is not a sweep key or the value is invalid.
    """
    if key not in SWEEP_KEYS:
        raise ConfigError(f"Unknown sweep key '{key}'; expected one of {sorted(SWEEP_KEYS)}")
    section, name = SWEEP_KEYS[key]
    sections = cfg.to_sections()
    sections[section][name] = _convert(section, name, value)
    return RunConfig.from_sections(sections)


def parse_sweep(text: str) -> tuple[str, list[str]]:
    """'qz=0,2,4,6' -> ('qz', ['0', '2', '4', '6'])."""
    if "=" not in text:
        raise ConfigError(f"Sweep must look like key=v1,v2,..., got {text!r}")
    key, _, rest = text.partition("=")
    values = [v.strip() for v in rest.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"Sweep '{key}' has no values")
    return key.strip(), values


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, scenario=replace(cfg.scenario, seed=seed))
