"""Run configuration: flat ``section.key = value`` text with ``#`` comments.

Keys may also be grouped under INI headers (``[kernel]`` then
``sigma_minus = 2``), which is equivalent to ``kernel.sigma_minus = 2``.
Relative paths resolve against the config file's directory.  The echo
written next to every run lists every key with absolute paths, so it can be
passed back as ``--config`` to reproduce the run.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

PRESET_DIR = Path(__file__).parent / "presets"


class ConfigError(ValueError):
    pass


Phase = Union[float, Path]


@dataclass
class RunConfig:
    mask_amplitude: Optional[Path] = None
    mask_phase: Optional[Path] = None
    mask_preset: Optional[str] = None
    mask_nx: int = 128
    mask_ny: int = 128
    mask_pitch: float = 1.0
    feature_radius: float = 5.0
    feature_separation: float = 12.0

    camera_nx: Optional[int] = None
    camera_ny: Optional[int] = None
    camera_pitch: Optional[float] = None

    kernel_type: str = "delta"
    eta: float = 1.0
    sigma_minus: float = 1.0
    sigma_plus: float = 32.0
    kernel_file: Optional[Path] = None
    pad: int = 0

    a1: float = 1 / math.sqrt(2)
    a2: float = 1 / math.sqrt(2)
    m_s: float = 1.0
    m_i: float = 1.0

    phi_s: Phase = 0.0
    phi_i: Phase = 0.0
    phi_i_prime: Phase = 0.0

    ladder: tuple = tuple(k * math.pi / 2 for k in range(4))

    noise_mode: str = "off"
    noise_scale: float = 1e4
    seed: int = 0

    signal_wavelength: Optional[float] = None
    idler_wavelength: Optional[float] = None

    output_dir: Optional[Path] = None
    workers: Optional[int] = None

    oracle_modes: int = 8
    oracle_instances: int = 1
    oracle_alpha2: Optional[float] = None
    oracle_object: str = "random"

    source: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kernel_type not in ("delta", "gaussian", "tabulated"):
            raise ConfigError(f"kernel.type must be delta, gaussian or tabulated, got {self.kernel_type!r}")
        if self.kernel_type == "tabulated" and self.kernel_file is None:
            raise ConfigError("kernel.type = tabulated needs kernel.file")
        if self.kernel_type == "gaussian" and not (self.sigma_minus > 0 and self.sigma_plus > 0):
            raise ConfigError("kernel.sigma_minus and kernel.sigma_plus must be positive")
        if abs(self.a1 ** 2 + self.a2 ** 2 - 1.0) > 1e-12:
            raise ConfigError(f"alpha.a1^2 + alpha.a2^2 must be 1, got {self.a1 ** 2 + self.a2 ** 2!r}")
        if self.m_s == 0 or self.m_i == 0:
            raise ConfigError("mapping.m_s and mapping.m_i must be nonzero")
        if self.noise_mode not in ("off", "poisson"):
            raise ConfigError(f"noise.mode must be off or poisson, got {self.noise_mode!r}")
        if self.noise_mode == "poisson" and not self.noise_scale > 0:
            raise ConfigError("noise.scale must be positive")
        if self.mask_preset not in (None, "disks"):
            raise ConfigError(f"unknown mask.preset {self.mask_preset!r}")
        if self.oracle_object not in ("random", "opaque", "clear"):
            raise ConfigError(f"oracle.object must be random, opaque or clear, got {self.oracle_object!r}")
        if self.pad < 0:
            raise ConfigError("kernel.pad must be >= 0")
        for p in (self.mask_amplitude, self.mask_phase, self.kernel_file,
                  *(v for v in (self.phi_s, self.phi_i, self.phi_i_prime) if isinstance(v, Path))):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"referenced file does not exist: {p}")

    def echo(self) -> str:
        lines = []
        for key, attr in _KEYS.items():
            value = getattr(self, attr)
            if value is None:
                continue
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"


# key in file -> RunConfig attribute
_KEYS = {
    "mask.amplitude": "mask_amplitude",
    "mask.phase": "mask_phase",
    "mask.preset": "mask_preset",
    "mask.nx": "mask_nx",
    "mask.ny": "mask_ny",
    "mask.pitch": "mask_pitch",
    "features.radius": "feature_radius",
    "features.separation": "feature_separation",
    "camera.nx": "camera_nx",
    "camera.ny": "camera_ny",
    "camera.pitch": "camera_pitch",
    "kernel.type": "kernel_type",
    "kernel.eta": "eta",
    "kernel.sigma_minus": "sigma_minus",
    "kernel.sigma_plus": "sigma_plus",
    "kernel.file": "kernel_file",
    "kernel.pad": "pad",
    "alpha.a1": "a1",
    "alpha.a2": "a2",
    "mapping.m_s": "m_s",
    "mapping.m_i": "m_i",
    "phase.phi_s": "phi_s",
    "phase.phi_i": "phi_i",
    "phase.phi_i_prime": "phi_i_prime",
    "ladder.values": "ladder",
    "noise.mode": "noise_mode",
    "noise.scale": "noise_scale",
    "noise.seed": "seed",
    "meta.signal_wavelength": "signal_wavelength",
    "meta.idler_wavelength": "idler_wavelength",
    "output.dir": "output_dir",
    "run.workers": "workers",
    "oracle.modes": "oracle_modes",
    "oracle.instances": "oracle_instances",
    "oracle.alpha2": "oracle_alpha2",
    "oracle.object": "oracle_object",
}
_PATHS = {"mask_amplitude", "mask_phase", "kernel_file", "output_dir"}
_PHASES = {"phi_s", "phi_i", "phi_i_prime"}
_INTS = {"mask_nx", "mask_ny", "camera_nx", "camera_ny", "pad", "seed", "workers",
         "oracle_modes", "oracle_instances"}
_STRS = {"mask_preset", "kernel_type", "noise_mode", "oracle_object"}
# keys written by the stack manifest; accepted and ignored on re-read
_IGNORED_PREFIXES = ("stack.", "diagnostics.")


def _format(value) -> str:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse_float(key, text) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def read_pairs(text: str) -> dict:
    """Flat ``{dotted.key: raw string}`` mapping from config text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       comment_prefixes=("#", ";"), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    pairs = {}
    for section in parser.sections():
        prefix = "" if section == "__root__" else section.strip() + "."
        for key, value in parser.items(section):
            pairs[prefix + key.strip()] = value.strip()
    return pairs


def parse_config(text: str, base: Path = Path(".")) -> RunConfig:
    values = {}
    for key, raw in read_pairs(text).items():
        if key.startswith(_IGNORED_PREFIXES):
            continue
        if key == "ladder.steps":
            n = int(raw)
            if n < 3:
                raise ConfigError("need >= 3 phase steps")
            values["ladder"] = tuple(2 * math.pi * k / n for k in range(n))
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr = _KEYS[key]
        if attr in _PATHS:
            p = Path(raw)
            values[attr] = p if p.is_absolute() else (base / p)
        elif attr in _PHASES:
            try:
                values[attr] = float(raw)
            except ValueError:
                p = Path(raw)
                values[attr] = p if p.is_absolute() else (base / p)
        elif attr == "ladder":
            values[attr] = tuple(_parse_float(key, v) for v in raw.replace(",", " ").split())
        elif attr in _INTS:
            try:
                values[attr] = int(raw)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        elif attr in _STRS:
            values[attr] = raw
        else:
            values[attr] = _parse_float(key, raw)
    for attr in _PATHS | _PHASES:
        if isinstance(values.get(attr), Path):
            values[attr] = values[attr].resolve()
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        preset = PRESET_DIR / f"{path}.ini"
        if preset.exists():
            path = preset
        else:
            raise FileNotFoundError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(), base=path.resolve().parent)
    cfg.source = path.resolve()
    return cfg


def disk_mask_values(cfg: RunConfig) -> np.ndarray:
    """Opaque field with three transmissive disks (magnification target)."""
    from .grid import FieldGrid

    grid = FieldGrid(cfg.mask_nx, cfg.mask_ny, cfg.mask_pitch)
    X, Y = grid.coords()
    s, r = cfg.feature_separation, cfg.feature_radius
    centres = [(-s, -0.5 * s), (s, -0.5 * s), (0.25 * s, s)]
    out = np.zeros(grid.shape)
    for cx, cy in centres:
        out[(X - cx) ** 2 + (Y - cy) ** 2 <= r ** 2] = 1.0
    return out
