"""Scenario files: YAML with one section per physics block.

Unknown keys anywhere are errors. Every problem found is reported with its
field path, e.g. ``optics[2].coupling: must lie in (0, 1]``.

Layout (all keys optional, defaults shown by ``fsoemu init-config``)::

    seed: 1
    direction: downlink
    output_dir: out
    pass: {satellite_altitude: 700000.0, ...}        # OrbitPass
    profile: {wind_speed: 21.0, ...}                  # TurbulenceProfile
    optics:                                           # one OpticalSystem per wavelength
      - {wavelength: 1.55e-06, ...}
    keyrate: {modulation_variance: 299.0, ...}        # KeyRateParams
    limits: {voa_rate: 1.8, ...}                      # ActuatorLimits
    run: {histogram_draws: 100, ...}                  # RunOptions
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import yaml

from .deviceplan import FSM_MODES, ActuatorLimits
from .geometry import OrbitPass
from .keyrate import KeyRateParams
from .losschannels import OpticalSystem
from .turbulence import DIRECTIONS, TurbulenceProfile

DEFAULT_WAVELENGTHS = (1550e-9, 850e-9, 630e-9)


class ConfigError(ValueError):
    """Scenario validation failure; ``errors`` lists every violation."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class RunOptions:
    """Sampling and output knobs that are not physics."""

    histogram_draws: int = 100  # extra draws per pass point for histograms and fits
    histogram_bins: int = 50
    device_faithful: bool = False
    fsm_mode: str = "gaussian"
    fit_method: str = "mle"  # "mle" or "mm" for the Weibull pointing-loss fit
    trusted_coupling: bool = False
    screen_size: int = 256
    screen_oversize: float = 1.0
    screen_subharmonics: int = 0
    screen_stride: int = 1  # one deformable-mirror frame every this many pass points

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if self.histogram_draws < 1:
            errors.append("histogram_draws must be >= 1")
        if self.histogram_bins < 1:
            errors.append("histogram_bins must be >= 1")
        if self.fsm_mode not in FSM_MODES:
            errors.append(f"fsm_mode must be one of {FSM_MODES}")
        if self.fit_method not in ("mle", "mm"):
            errors.append("fit_method must be 'mle' or 'mm'")
        n = self.screen_size
        if n < 64 or n & (n - 1):
            errors.append("screen_size must be a power of two >= 64")
        if self.screen_oversize < 1:
            errors.append("screen_oversize must be >= 1")
        if self.screen_subharmonics < 0:
            errors.append("screen_subharmonics must be >= 0")
        if self.screen_stride < 1:
            errors.append("screen_stride must be >= 1")
        return errors


@dataclass(frozen=True)
class Scenario:
    pass_: OrbitPass = field(default_factory=OrbitPass)
    profile: TurbulenceProfile = field(default_factory=TurbulenceProfile)
    optics: tuple = tuple(OpticalSystem(wavelength=w) for w in DEFAULT_WAVELENGTHS)
    keyrate: KeyRateParams = field(default_factory=KeyRateParams)
    limits: ActuatorLimits = field(default_factory=ActuatorLimits)
    run: RunOptions = field(default_factory=RunOptions)
    seed: int = 1
    direction: str = "downlink"
    output_dir: str = "out"

    def __post_init__(self):
        errors = []
        if not self.optics:
            errors.append("optics: at least one wavelength is required")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            errors.append("seed: must be an integer in [0, 2^64)")
        if self.direction not in DIRECTIONS:
            errors.append(f"direction: must be one of {DIRECTIONS}")
        if errors:
            raise ConfigError(errors)

    def with_overrides(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)


_SECTIONS = {"pass": OrbitPass, "profile": TurbulenceProfile, "keyrate": KeyRateParams, "limits": ActuatorLimits, "run": RunOptions}
_TOP = {"seed", "direction", "output_dir", "optics", *_SECTIONS}


def _coerce(value, default, path, errors):
    # Type follows the dataclass default; None-defaulted fields take floats.
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            errors.append(f"{path}: expected a list of {len(default)} numbers")
            return default
        return tuple(_coerce(v, d, f"{path}[{i}]", errors) for i, (v, d) in enumerate(zip(value, default)))
    if value is None:
        if default is None:
            return None
        errors.append(f"{path}: may not be null")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{path}: expected a number, got {value!r}")
        return value
    value = float(value)
    if math.isnan(value):
        errors.append(f"{path}: NaN is not allowed")
    return value


def _build(cls, data, path, errors, base=None):
    base = base if base is not None else {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping")
        return None
    defaults = {f.name: (f.default if f.default is not dataclasses.MISSING else f.default_factory()) for f in dataclasses.fields(cls)}
    kwargs = dict(base)
    for key, value in data.items():
        if key not in defaults:
            errors.append(f"{path}.{key}: unknown key")
            continue
        n_before = len(errors)
        coerced = _coerce(value, defaults[key], f"{path}.{key}", errors)
        if len(errors) == n_before:
            kwargs[key] = coerced
    # Construct even after key errors so every invariant violation is listed.
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        for msg in str(exc).split("; "):
            name, _, rest = msg.partition(" ")
            errors.append(f"{path}.{name}: {rest}" if name in defaults else f"{path}: {msg}")
        return None


def scenario_from_dict(data: dict) -> Scenario:
    errors: list[str] = []
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    for key in data:
        if key not in _TOP:
            errors.append(f"{key}: unknown key")
    built = {}
    for key, cls in _SECTIONS.items():
        built["pass_" if key == "pass" else key] = _build(cls, data.get(key), key, errors)
    optics_data = data.get("optics")
    if optics_data is None:
        optics = tuple(OpticalSystem(wavelength=w) for w in DEFAULT_WAVELENGTHS)
    elif not isinstance(optics_data, list) or not optics_data:
        errors.append("optics: expected a non-empty list of optical systems")
        optics = ()
    else:
        optics = tuple(_build(OpticalSystem, o, f"optics[{i}]", errors) for i, o in enumerate(optics_data))
        wl = [o.wavelength for o in optics if o is not None]
        if len(set(wl)) != len(wl):
            errors.append("optics: wavelengths must be distinct")
    top = {}
    for key, default in (("seed", 1), ("direction", "downlink"), ("output_dir", "out")):
        if key in data:
            top[key] = _coerce(data[key], default, key, errors)
    if errors:
        raise ConfigError(errors)
    try:
        return Scenario(optics=optics, **built, **top)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def scenario_to_dict(s: Scenario) -> dict:
    def section(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    return {
        "seed": s.seed,
        "direction": s.direction,
        "output_dir": s.output_dir,
        "pass": section(s.pass_),
        "profile": section(s.profile),
        "optics": [section(o) for o in s.optics],
        "keyrate": section(s.keyrate),
        "limits": section(s.limits),
        "run": section(s.run),
    }


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=False)


def loads(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<yaml>: {exc}"]) from exc
    return scenario_from_dict(data)


def load(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def scenario_hash(s: Scenario) -> str:
    """Short SHA-256 of the canonical serialisation, ignoring ``output_dir``."""
    return hashlib.sha256(dumps(dataclasses.replace(s, output_dir="")).encode("utf-8")).hexdigest()[:16]
