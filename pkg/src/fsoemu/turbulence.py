"""Refractive-index structure profile and the path statistics derived from it.

The altitude profile is the Hufnagel-Andrews-Phillips (HAP) model. Path
integrals run along the slant path from the station (``y = 0``) to the
satellite (``y = z``); "uplink" weights turbulence near the transmitter on
the ground, "downlink" weights it near the satellite-side end, exactly as the
two weighted integrals are written for the two propagation directions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .geometry import OrbitPass, PathSample, altitude_along_path

DIRECTIONS = ("uplink", "downlink")
DB_PER_NEPER_INTENSITY = 10.0 / math.log(10.0)


class NumericalError(RuntimeError):
    """Raised when an adaptive quadrature fails to reach its tolerance."""


@dataclass(frozen=True)
class TurbulenceProfile:
    wind_speed: float = 21.0
    ground_cn2: float = 1e-12
    instrument_height: float = 1.0
    background: float = 1.0
    power_law: float = 4.0 / 3.0
    inner_scale: float = 0.01
    outer_scale: float = 25.0
    ceiling: float | None = 20e3

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        for name in ("wind_speed", "instrument_height", "background", "inner_scale", "outer_scale"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if not 1e-17 <= self.ground_cn2 <= 1e-10:
            errors.append("ground_cn2 must lie in [1e-17, 1e-10] m^-2/3")
        if self.power_law < 0:
            errors.append("power_law must be >= 0")
        if self.inner_scale >= self.outer_scale:
            errors.append("inner_scale must be < outer_scale")
        if self.ceiling is not None and self.ceiling <= self.instrument_height:
            errors.append("ceiling must exceed instrument_height")
        return errors


@dataclass(frozen=True)
class PathTurbulence:
    integral: float
    direction: str
    fried_r0: float
    rytov_variance: float
    wander_variance: float


def cn2_at_altitude(h, profile: TurbulenceProfile):
    """HAP structure parameter C_N^2(h) in m^-2/3 (scalar or array)."""
    h = np.asarray(h, dtype=float)
    h0 = profile.instrument_height
    if np.any(h < h0 * (1 - 1e-12)):
        raise ValueError(f"altitude below instrument height {h0} m")
    wind = 0.00594 * (profile.wind_speed / 27.0) ** 2 * (1e-5 * h) ** 10 * np.exp(-h / 1000.0)
    boundary = 2.7e-16 * np.exp(-h / 1500.0)
    surface = profile.ground_cn2 * (h0 / h) ** profile.power_law
    out = profile.background * (wind + boundary + surface)
    return float(out) if out.ndim == 0 else out


def _profile_cn2(profile: TurbulenceProfile) -> Callable:
    def cn2(h):
        out = cn2_at_altitude(np.maximum(h, profile.instrument_height), profile)
        if profile.ceiling is not None:
            out = np.where(np.asarray(h) > profile.ceiling, 0.0, out)
        return out

    return cn2


def _breakpoints(zenith, orbit, z, ceiling):
    # Path positions where the integrand changes scale; approximate is fine.
    heights = [10.0, 100.0, 1e3, 5e3, 10e3, 15e3, 20e3, 30e3]
    if ceiling is not None:
        heights.append(ceiling)
    re = orbit.earth_radius
    c = math.cos(zenith)
    pts = {-re * c + math.sqrt((re * c) ** 2 + (re + hh) ** 2 - re**2) for hh in heights}
    return sorted(y for y in pts if 0 < y < z)


def _quad(f, a, b, points, epsrel, what, limit=500):
    val, err, info = integrate.quad(f, a, b, points=points or None, epsrel=epsrel, epsabs=0.0, limit=limit, full_output=True)[:3]
    if not math.isfinite(val) or err > epsrel * abs(val) * 10 and err > 1e-300:
        raise NumericalError(f"{what}: quadrature did not converge (value={val:.6g}, abserr={err:.3g}, neval={info['neval']})")
    return val


def path_integral(
    sample: PathSample,
    profile: TurbulenceProfile,
    direction: str,
    orbit: OrbitPass,
    cn2: Callable | None = None,
    epsrel: float = 1e-4,
) -> float:
    """Weighted structure integral I0 (m^1/3) along the slant path.

    ``cn2`` overrides the HAP profile with any callable of altitude.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if cn2 is None:
        return _hap_integral(sample.zenith, sample.slant_range, profile, direction, orbit, epsrel)
    return _weighted_integral(sample.zenith, sample.slant_range, profile, direction, orbit, epsrel, cn2)


def _weighted_integral(zenith, z, profile, direction, orbit, epsrel, cn2=None):
    h0 = profile.instrument_height
    fn = cn2 if cn2 is not None else _profile_cn2(profile)
    if direction == "uplink":
        def weight(y):
            return (1.0 - y / z) ** (5.0 / 3.0)
    else:
        def weight(y):
            return (y / z) ** (5.0 / 3.0)

    def integrand(y):
        return weight(y) * float(fn(altitude_along_path(y, zenith, orbit, h0)))

    pts = _breakpoints(zenith, orbit, z, profile.ceiling)
    return _quad(integrand, 0.0, z, pts, epsrel, "path_integral")


@lru_cache(maxsize=4096)
def _hap_integral(zenith, z, profile, direction, orbit, epsrel):
    # wavelength-independent, so cached across wavelengths and mirrored pass points
    return _weighted_integral(zenith, z, profile, direction, orbit, epsrel)


def fried_parameter(integral: float, wavelength: float) -> float:
    """Coherence length r0 = (0.423 k^2 I0)^(-3/5)."""
    if integral < 0 or wavelength <= 0:
        raise ValueError("integral must be >= 0 and wavelength > 0")
    if integral == 0:
        return math.inf
    k = 2 * math.pi / wavelength
    return (0.423 * k**2 * integral) ** (-3.0 / 5.0)


def beam_wander_variance(wavelength: float, z: float, w0: float, r0: float) -> float:
    """Total (two-axis) beam-centroid displacement variance <r_c^2> (m^2).

    Each transverse axis carries half of this.
    """
    if math.isinf(r0):
        return 0.0
    return 0.1337 * wavelength**2 * z**2 / (w0 ** (1.0 / 3.0) * r0 ** (5.0 / 3.0))


def rytov_variance(
    sample: PathSample,
    profile: TurbulenceProfile,
    wavelength: float,
    direction: str,
    orbit: OrbitPass,
    epsrel: float = 1e-4,
) -> tuple[float, float]:
    """Weak-fluctuation Rytov variance and the effective turbulence distance.

    Downlink uses the plane-wave weight y^(5/6) (y from the receiver);
    uplink uses the spherical-wave weight (y (z - y) / z)^(5/6). The second
    return value is the turbulence-weighted distance from the receiver used
    for aperture averaging.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    k = 2 * math.pi / wavelength
    m56, m2 = _rytov_moments(sample.zenith, sample.slant_range, profile, direction, orbit, epsrel)
    sigma_r2 = 2.25 * k ** (7.0 / 6.0) * m56
    scale = (m2 / m56) ** (6.0 / 7.0) if m56 > 0 else math.inf
    return sigma_r2, scale


@lru_cache(maxsize=4096)
def _rytov_moments(zenith, z, profile, direction, orbit, epsrel):
    h0 = profile.instrument_height
    fn = _profile_cn2(profile)
    if direction == "downlink":
        def dist(y):
            return y
    else:
        def dist(y):
            return y * (z - y) / z

    def cn(y):
        return float(fn(altitude_along_path(y, zenith, orbit, h0)))

    pts = _breakpoints(zenith, orbit, z, profile.ceiling)
    m56 = _quad(lambda y: cn(y) * dist(y) ** (5.0 / 6.0), 0.0, z, pts, epsrel, "rytov")
    m2 = _quad(lambda y: cn(y) * dist(y) ** 2, 0.0, z, pts, epsrel, "rytov scale")
    return m56, m2


def aperture_averaging(wavelength: float, aperture: float, scale: float) -> float:
    """Circular-aperture averaging factor for weak fluctuations."""
    if math.isinf(aperture):
        return 0.0
    k = 2 * math.pi / wavelength
    return (1.0 + 1.062 * k * aperture**2 / (4.0 * scale)) ** (-7.0 / 6.0)


def scintillation_db_variance(sigma_i2: float) -> float:
    """dB^2 variance of a lognormal intensity with normalised variance ``sigma_i2``."""
    return DB_PER_NEPER_INTENSITY**2 * math.log1p(sigma_i2)


def scintillation_loss_variance(
    sample: PathSample,
    profile: TurbulenceProfile,
    optics,
    orbit: OrbitPass,
    direction: str = "downlink",
) -> float:
    """Variance (dB^2) of the lognormal scintillation loss at one pass point.

    Weak-fluctuation Rytov variance reduced by aperture averaging over the
    receiver's outer diameter; ``optics`` needs ``wavelength`` and
    ``rx_aperture``.
    """
    if math.isinf(optics.rx_aperture):
        return 0.0
    sigma_r2, scale = rytov_variance(sample, profile, optics.wavelength, direction, orbit)
    sigma_i2 = sigma_r2 * aperture_averaging(optics.wavelength, optics.rx_aperture, scale)
    return scintillation_db_variance(sigma_i2)


def path_turbulence(
    sample: PathSample,
    profile: TurbulenceProfile,
    wavelength: float,
    beam_waist: float,
    direction: str,
    orbit: OrbitPass,
) -> PathTurbulence:
    i0 = path_integral(sample, profile, direction, orbit)
    r0 = fried_parameter(i0, wavelength)
    sigma_r2, _ = rytov_variance(sample, profile, wavelength, direction, orbit)
    return PathTurbulence(
        integral=i0,
        direction=direction,
        fried_r0=r0,
        rytov_variance=sigma_r2,
        wander_variance=beam_wander_variance(wavelength, sample.slant_range, beam_waist, r0),
    )
