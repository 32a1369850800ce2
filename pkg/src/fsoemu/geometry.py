"""Overpass kinematics for a circular LEO orbit seen from one ground station.

Angles are radians internally; :class:`OrbitPass` takes degrees for the
user-facing elevation/zenith settings because that is how passes are quoted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS = 6371e3
GM_EARTH = 3.986004418e14

INTERPOLATIONS = ("great_circle", "quadratic")


@dataclass(frozen=True)
class OrbitPass:
    """One culminating (or near-culminating) overpass.

    ``edge_zenith`` is the zenith angle at both ends of the emulated window and
    ``max_elevation`` the elevation at mid-pass. ``station_height`` is the
    ground-station altitude used as the lower end of every path.
    """

    satellite_altitude: float = 700e3
    pass_duration: float = 120.0
    max_elevation: float = 90.0
    time_step: float = 0.5
    earth_radius: float = EARTH_RADIUS
    edge_zenith: float = 30.0
    station_height: float = 0.0
    interpolation: str = "great_circle"

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if not self.satellite_altitude > 0:
            errors.append("satellite_altitude must be > 0")
        if not self.pass_duration > 0:
            errors.append("pass_duration must be > 0")
        if not self.time_step > 0:
            errors.append("time_step must be > 0")
        if not 0 < self.max_elevation <= 90:
            errors.append("max_elevation must be in (0, 90] deg")
        if not self.earth_radius > 0:
            errors.append("earth_radius must be > 0")
        if not 0 <= self.edge_zenith < 90:
            errors.append("edge_zenith must be in [0, 90) deg")
        elif self.edge_zenith < 90 - self.max_elevation:
            errors.append("edge_zenith must be >= 90 - max_elevation")
        if self.station_height < 0:
            errors.append("station_height must be >= 0")
        if self.interpolation not in INTERPOLATIONS:
            errors.append(f"interpolation must be one of {INTERPOLATIONS}")
        return errors

    @property
    def min_zenith(self) -> float:
        """Zenith angle at culmination, radians."""
        return math.radians(90.0 - self.max_elevation)


@dataclass(frozen=True)
class PathSample:
    t: float
    zenith: float
    slant_range: float


def _check_zenith(zenith):
    z = np.asarray(zenith, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z < 0) or np.any(z >= math.pi / 2):
        raise ValueError(f"zenith angle must lie in [0, pi/2), got {zenith!r}")


def slant_range(zenith, altitude: float, earth_radius: float = EARTH_RADIUS):
    """Line-of-sight distance from the station to a satellite at ``altitude``.

    Spherical Earth; accepts scalars or arrays of zenith angles (rad).
    """
    _check_zenith(zenith)
    if altitude <= 0:
        raise ValueError("altitude must be > 0")
    z = np.asarray(zenith, dtype=float)
    rs = earth_radius + altitude
    out = np.sqrt(rs**2 - (earth_radius * np.sin(z)) ** 2) - earth_radius * np.cos(z)
    return float(out) if out.ndim == 0 else out


def central_angle(zenith, altitude: float, earth_radius: float = EARTH_RADIUS):
    """Earth-centred angle between station and sub-satellite point."""
    z = np.asarray(zenith, dtype=float)
    nadir = np.arcsin(earth_radius * np.sin(z) / (earth_radius + altitude))
    out = z - nadir
    return float(out) if out.ndim == 0 else out


def zenith_from_central_angle(psi, altitude: float, earth_radius: float = EARTH_RADIUS):
    psi = np.asarray(psi, dtype=float)
    rs = earth_radius + altitude
    out = np.arctan2(rs * np.sin(psi), rs * np.cos(psi) - earth_radius)
    return float(out) if out.ndim == 0 else out


def sample_times(pass_: OrbitPass) -> np.ndarray:
    n = math.ceil(pass_.pass_duration / pass_.time_step - 1e-9) + 1
    t = np.arange(n, dtype=float) * pass_.time_step
    t[-1] = pass_.pass_duration
    return t


def zenith_at(t, pass_: OrbitPass):
    """Zenith angle (rad) at time(s) ``t`` in the emulated window."""
    t = np.asarray(t, dtype=float)
    u = 2.0 * t / pass_.pass_duration - 1.0
    edge = math.radians(pass_.edge_zenith)
    low = pass_.min_zenith
    if pass_.interpolation == "quadratic":
        out = low + (edge - low) * u**2
    else:
        h, re = pass_.satellite_altitude, pass_.earth_radius
        cross = central_angle(low, h, re)
        psi_edge = central_angle(edge, h, re)
        along_edge = math.acos(min(1.0, math.cos(psi_edge) / math.cos(cross)))
        psi = np.arccos(np.cos(cross) * np.cos(along_edge * u))
        out = zenith_from_central_angle(psi, h, re)
    return float(out) if np.ndim(out) == 0 else out


def zenith_profile(pass_: OrbitPass) -> list[PathSample]:
    t = sample_times(pass_)
    zen = np.atleast_1d(zenith_at(t, pass_))
    rng = np.atleast_1d(slant_range(zen, pass_.satellite_altitude, pass_.earth_radius))
    return [PathSample(float(a), float(b), float(c)) for a, b, c in zip(t, zen, rng)]


def altitude_along_path(path_position, zenith: float, pass_: OrbitPass, h0: float | None = None):
    """Altitude of the point ``path_position`` metres up the station-satellite ray.

    Exact spherical geometry measured from the station at height ``h0``
    (defaults to ``pass_.station_height``). Vectorised over positions.
    """
    _check_zenith(zenith)
    if h0 is None:
        h0 = pass_.station_height
    x = np.asarray(path_position, dtype=float)
    z = slant_range(zenith, pass_.satellite_altitude, pass_.earth_radius)
    if np.any(x < 0) or np.any(x > z * (1 + 1e-12)):
        raise ValueError("path_position must lie in [0, slant_range]")
    re = pass_.earth_radius
    # sqrt(a) - b written as (a - b^2) / (sqrt(a) + b) to avoid cancellation near x = 0.
    num = x**2 + 2 * re * x * math.cos(zenith)
    geo = num / (np.sqrt(re**2 + num) + re)
    # Station height tapers linearly so both endpoints are exact.
    out = geo + h0 * (1.0 - x / z)
    out = np.where(x >= z, pass_.satellite_altitude, out)
    return float(out) if out.ndim == 0 else out


def orbital_angular_rate(altitude: float, earth_radius: float = EARTH_RADIUS, gm: float = GM_EARTH) -> float:
    """Keplerian angular speed (rad/s) of a circular orbit."""
    return math.sqrt(gm / (earth_radius + altitude) ** 3)


def zenith_rate(zenith: float, altitude: float, earth_radius: float = EARTH_RADIUS) -> float:
    """|d(zenith)/dt| (rad/s) for a culminating pass on a Keplerian circular orbit."""
    rs = earth_radius + altitude
    psi = central_angle(zenith, altitude, earth_radius)
    rho2 = rs**2 + earth_radius**2 - 2 * rs * earth_radius * math.cos(psi)
    return orbital_angular_rate(altitude, earth_radius) * rs * (rs - earth_radius * math.cos(psi)) / rho2
