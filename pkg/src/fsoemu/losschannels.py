"""Per-timestep channel transmittance split by mechanism.

Three mechanisms map onto the three emulator actuators:

* extinction and diffraction (attenuator): ``T_atm`` and ``T_geo`` at zero offset
* pointing error and beam wander (steering mirror): ``T_point``, the extra
  loss from the beam centre sitting ``d`` away from the telescope axis
* scintillation (deformable mirror): ``T_scint``, lognormal with unit mean

``T_total = T_atm * T_geo * T_point * T_scint * eta_T``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import i0e

from .geometry import OrbitPass, PathSample, altitude_along_path
from .turbulence import (
    DB_PER_NEPER_INTENSITY,
    TurbulenceProfile,
    _quad,
    beam_wander_variance,
    fried_parameter,
    path_integral,
    scintillation_loss_variance,
)

SCALE_HEIGHT = 6600.0
REFERENCE_WAVELENGTH = 550e-9


def loss_db(t):
    """-10 log10(T); scalar or array."""
    t = np.asarray(t, dtype=float)
    out = -10.0 * np.log10(t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OpticalSystem:
    """Transmitter, receiver and coupling parameters for one wavelength.

    ``extinction`` is the extinction factor in 1/m. When it is ``None`` it is
    derived from ``zenith_transmittance_550`` (one-way zenith transmittance at
    550 nm through the exponential aerosol layer) scaled by
    ``(550 nm / wavelength) ** extinction_exponent``.
    ``beam_waist`` defaults to half the transmit aperture.
    """

    wavelength: float = 1550e-9
    tx_aperture: float = 0.08
    beam_waist: float | None = None
    rx_aperture: float = 0.6
    obstruction_ratio: float = 0.3
    pointing_error: float = 4e-6
    extinction: float | None = None
    zenith_transmittance_550: float = 0.7
    extinction_exponent: float = 1.3
    coupling: float = 0.4
    scintillation_std_db: float | None = None

    def __post_init__(self):
        if self.beam_waist is None:
            object.__setattr__(self, "beam_waist", self.tx_aperture / 2.0)
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if not 300e-9 <= self.wavelength <= 2e-6:
            errors.append("wavelength must lie in [300 nm, 2 um]")
        if not self.tx_aperture > 0:
            errors.append("tx_aperture must be > 0")
        if not self.rx_aperture > 0:
            errors.append("rx_aperture must be > 0")
        if not (self.beam_waist is not None and 0 < self.beam_waist <= self.tx_aperture / 2 * (1 + 1e-12)):
            errors.append("beam_waist must lie in (0, tx_aperture/2]")
        if not 0 <= self.obstruction_ratio < 1:
            errors.append("obstruction_ratio must lie in [0, 1)")
        if self.pointing_error < 0:
            errors.append("pointing_error must be >= 0")
        if self.extinction is not None and self.extinction < 0:
            errors.append("extinction must be >= 0")
        if not 0 < self.zenith_transmittance_550 <= 1:
            errors.append("zenith_transmittance_550 must lie in (0, 1]")
        if not 0 < self.coupling <= 1:
            errors.append("coupling must lie in (0, 1]")
        if self.scintillation_std_db is not None and self.scintillation_std_db < 0:
            errors.append("scintillation_std_db must be >= 0")
        return errors

    @property
    def alpha0(self) -> float:
        """Extinction factor (1/m) actually used."""
        if self.extinction is not None:
            return self.extinction
        at_550 = -math.log(self.zenith_transmittance_550) / SCALE_HEIGHT
        return at_550 * (REFERENCE_WAVELENGTH / self.wavelength) ** self.extinction_exponent

    @property
    def outer_radius(self) -> float:
        return self.rx_aperture / 2.0

    @property
    def inner_radius(self) -> float:
        return self.obstruction_ratio * self.rx_aperture / 2.0


@dataclass(frozen=True)
class LossSample:
    t: float
    T_atm: float
    T_geo: float
    T_point: float
    T_scint: float
    T_total: float
    d: float


# ---------------------------------------------------------------- extinction

def extinction_path_length(pass_point: PathSample, orbit: OrbitPass, scale_height: float = SCALE_HEIGHT) -> float:
    """g(theta) = integral of exp(-h(x)/scale_height) along the slant path (m)."""
    z = pass_point.slant_range
    re, c = orbit.earth_radius, math.cos(pass_point.zenith)
    hs = orbit.station_height
    pts = sorted(
        y for y in (-re * c + math.sqrt((re * c) ** 2 + (re + hs + k * scale_height) ** 2 - re**2) for k in (0.5, 1, 2, 4, 8, 16))
        if 0 < y < z
    )

    def f(x):
        return math.exp(-altitude_along_path(x, pass_point.zenith, orbit) / scale_height)

    return _quad(f, 0.0, z, pts, 1e-6, "extinction path length")


def atmospheric_transmittance(pass_point: PathSample, alpha0: float, orbit: OrbitPass) -> float:
    """exp(-alpha0 g(theta)); ``alpha0`` in 1/m."""
    if alpha0 < 0:
        raise ValueError("alpha0 must be >= 0")
    if alpha0 == 0:
        return 1.0
    return math.exp(-alpha0 * extinction_path_length(pass_point, orbit))


# ---------------------------------------------------------------- beam size

def beam_width(z: float, wavelength: float, w0: float) -> float:
    """Diffraction-limited Gaussian beam radius after distance ``z``."""
    return w0 * math.sqrt(1.0 + (z * wavelength / (math.pi * w0**2)) ** 2)


def effective_beam_width(pass_point: PathSample, optics: OpticalSystem, r0: float) -> tuple[float, float]:
    """(omega, omega_st): free-space and short-term turbulent beam radius (m)."""
    z = pass_point.slant_range
    lam, w0 = optics.wavelength, optics.beam_waist
    w = beam_width(z, lam, w0)
    if math.isinf(r0):
        return w, w
    if not r0 > 0:
        raise ValueError("r0 must be > 0")
    phi = 0.33 * (r0 / w0) ** (1.0 / 3.0)
    w_st = math.sqrt(w**2 + 2.0 * (lam * z / (math.pi * r0)) ** 2 * (1.0 - phi) ** 2)
    return w, w_st


# ---------------------------------------------------------------- capture

def _radial_integrand(r, w, d):
    # Angle-integrated offset Gaussian; i0e keeps large 4rd/w^2 finite.
    return 4.0 / w**2 * r * np.exp(-2.0 * (r - d) ** 2 / w**2) * i0e(4.0 * r * d / w**2)


def geometric_transmittance(w: float, aperture: float, obstruction_ratio: float = 0.0, d: float = 0.0, epsrel: float = 1e-9) -> float:
    """Power fraction of a Gaussian beam (radius ``w``) hitting an annular aperture.

    ``aperture`` is the outer diameter, the inner blocked disk has diameter
    ``obstruction_ratio * aperture`` and the beam centre is ``d`` off axis.
    The azimuthal integral is done analytically (modified Bessel I0) and the
    radial one by adaptive quadrature.
    """
    if not (w > 0 and aperture > 0 and d >= 0 and 0 <= obstruction_ratio < 1):
        raise ValueError("need w > 0, aperture > 0, d >= 0 and obstruction_ratio in [0, 1)")
    if math.isinf(aperture):
        if obstruction_ratio == 0:
            return 1.0
        raise ValueError("an obstructed aperture needs a finite diameter")
    ro = aperture / 2.0
    ri = obstruction_ratio * ro
    pts = [p for p in (d - 3 * w, d, d + 3 * w) if ri < p < ro]
    val = _quad(lambda r: _radial_integrand(r, w, d), ri, ro, pts, epsrel, "geometric transmittance")
    return min(1.0, val)


def annulus_capture(w: float, aperture: float, obstruction_ratio: float = 0.0) -> float:
    """Closed form of :func:`geometric_transmittance` at ``d = 0``."""
    ro = aperture / 2.0
    ri = obstruction_ratio * ro
    return math.exp(-2.0 * ri**2 / w**2) - math.exp(-2.0 * ro**2 / w**2)


def geometric_transmittance_many(w: float, aperture: float, obstruction_ratio: float, d, nodes: int = 24) -> np.ndarray:
    """Vectorised :func:`geometric_transmittance` over offsets ``d``.

    Composite Gauss-Legendre with panels no wider than w/4; agrees with the
    adaptive version to ~1e-10 for smooth cases.
    """
    d = np.asarray(d, dtype=float)
    if math.isinf(aperture):
        if obstruction_ratio == 0:
            return np.ones_like(d)
        raise ValueError("an obstructed aperture needs a finite diameter")
    ro = aperture / 2.0
    ri = obstruction_ratio * ro
    panels = max(1, math.ceil((ro - ri) / (w / 4.0)))
    x, wt = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(ri, ro, panels + 1)
    half = np.diff(edges) / 2.0
    r = ((edges[:-1] + half)[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * wt[None, :]).ravel()
    flat = d.ravel()
    out = np.empty_like(flat)
    for start in range(0, flat.size, 4096):
        chunk = flat[start : start + 4096, None]
        out[start : start + 4096] = _radial_integrand(r[None, :], w, chunk) @ wr
    return np.minimum(out.reshape(d.shape), 1.0)


# ---------------------------------------------------------------- random draws

def deterministic_offset(pass_point: PathSample, optics: OpticalSystem) -> float:
    """Beam-centre offset from a constant pointing error: z tan(t_err/2)."""
    return pass_point.slant_range * math.tan(optics.pointing_error / 2.0)


def pointing_offset_sample(pass_point: PathSample, optics: OpticalSystem, sigma_tb2: float, gen: np.random.Generator, size=None):
    """Radial beam-centre offset(s) at the receiver (m).

    The deterministic offset lies along x; wander adds an isotropic Gaussian
    with total variance ``sigma_tb2`` (``sigma_tb2 / 2`` per axis).
    """
    if sigma_tb2 < 0:
        raise ValueError("sigma_tb2 must be >= 0")
    d_det = deterministic_offset(pass_point, optics)
    s = math.sqrt(sigma_tb2 / 2.0)
    shape = (2,) if size is None else (2,) + tuple(np.atleast_1d(size))
    g = gen.standard_normal(shape)
    out = np.hypot(d_det + s * g[0], s * g[1])
    return float(out) if size is None else out


def scintillation_loss_sample(variance_db2: float, gen: np.random.Generator, size=None):
    """Unit-mean lognormal intensity factor(s) whose loss in dB has variance ``variance_db2``.

    I = exp(2 chi) with chi ~ N(-s^2, s^2), so <I> = 1 and std(loss_dB) =
    (20 / ln 10) s. Values above 1 are fades in reverse (constructive
    interference) and are kept.
    """
    if variance_db2 < 0:
        raise ValueError("variance must be >= 0")
    s = math.sqrt(variance_db2) / (2.0 * DB_PER_NEPER_INTENSITY)
    if s == 0:
        return 1.0 if size is None else np.ones(size)
    chi = -(s**2) + s * gen.standard_normal(size)
    out = np.exp(2.0 * chi)
    return float(out) if size is None else out


# ---------------------------------------------------------------- composition

@dataclass(frozen=True)
class ChannelState:
    """Deterministic channel quantities at one pass point."""

    t: float
    zenith: float
    slant_range: float
    T_atm: float
    T_geo: float
    omega: float
    omega_st: float
    r0: float
    wander_variance: float
    d_det: float
    scint_variance_db2: float


def channel_state(
    pass_point: PathSample,
    profile: TurbulenceProfile,
    optics: OpticalSystem,
    direction: str,
    orbit: OrbitPass,
) -> ChannelState:
    r0 = fried_parameter(path_integral(pass_point, profile, direction, orbit), optics.wavelength)
    w, w_st = effective_beam_width(pass_point, optics, r0)
    if optics.scintillation_std_db is not None:
        scint = optics.scintillation_std_db**2
    else:
        scint = scintillation_loss_variance(pass_point, profile, optics, orbit, direction)
    return ChannelState(
        t=pass_point.t,
        zenith=pass_point.zenith,
        slant_range=pass_point.slant_range,
        T_atm=atmospheric_transmittance(pass_point, optics.alpha0, orbit),
        T_geo=geometric_transmittance(w_st, optics.rx_aperture, optics.obstruction_ratio, 0.0),
        omega=w,
        omega_st=w_st,
        r0=r0,
        wander_variance=beam_wander_variance(optics.wavelength, pass_point.slant_range, optics.beam_waist, r0),
        d_det=deterministic_offset(pass_point, optics),
        scint_variance_db2=scint,
    )


def pointing_transmittance(state: ChannelState, optics: OpticalSystem, d) -> np.ndarray:
    """T_geo(d) / T_geo(0): the extra capture loss from an offset beam."""
    return geometric_transmittance_many(state.omega_st, optics.rx_aperture, optics.obstruction_ratio, d) / state.T_geo


def sample_state(state: ChannelState, optics: OpticalSystem, gen: np.random.Generator, n: int) -> dict:
    """``n`` joint draws of (d, T_point, T_scint) at one pass point."""
    s = math.sqrt(state.wander_variance / 2.0)
    g = gen.standard_normal((2, n))
    d = np.hypot(state.d_det + s * g[0], s * g[1])
    t_point = np.minimum(pointing_transmittance(state, optics, d), 1.0)
    t_scint = scintillation_loss_sample(state.scint_variance_db2, gen, n)
    return {"d": d, "T_point": t_point, "T_scint": np.asarray(t_scint, dtype=float)}


def link_budget_sample(
    pass_point: PathSample,
    profile: TurbulenceProfile,
    optics: OpticalSystem,
    direction: str,
    gen: np.random.Generator,
    orbit: OrbitPass,
) -> LossSample:
    state = channel_state(pass_point, profile, optics, direction, orbit)
    draw = sample_state(state, optics, gen, 1)
    t_point, t_scint, d = float(draw["T_point"][0]), float(draw["T_scint"][0]), float(draw["d"][0])
    return LossSample(
        t=pass_point.t,
        T_atm=state.T_atm,
        T_geo=state.T_geo,
        T_point=t_point,
        T_scint=t_scint,
        T_total=state.T_atm * state.T_geo * t_point * t_scint * optics.coupling,
        d=d,
    )


# ---------------------------------------------------------------- series

SERIES_COLUMNS = ("t_s", "zenith_deg", "T_atm_dB", "T_geo_dB", "T_point_dB", "T_scint_dB", "total_dB", "d_m")


@dataclass
class LossTimeSeries:
    t: np.ndarray
    zenith: np.ndarray
    T_atm: np.ndarray
    T_geo: np.ndarray
    T_point: np.ndarray
    T_scint: np.ndarray
    d: np.ndarray
    coupling: float = 1.0
    wavelength: float = float("nan")
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("coupling", "wavelength", "metadata"):
                continue
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=float))
        n = self.t.size
        if n == 0:
            raise ValueError("empty series")
        if any(getattr(self, k).shape != (n,) for k in ("zenith", "T_atm", "T_geo", "T_point", "T_scint", "d")):
            raise ValueError("all columns must have the same length")

    def __len__(self) -> int:
        return self.t.size

    @property
    def T_total(self) -> np.ndarray:
        return self.T_atm * self.T_geo * self.T_point * self.T_scint * self.coupling

    @property
    def T_voa(self) -> np.ndarray:
        """Slowly varying part reproduced by the attenuator: T_atm * T_geo(d=0)."""
        return self.T_atm * self.T_geo

    @property
    def time_step(self) -> float:
        return float(np.median(np.diff(self.t))) if self.t.size > 1 else 0.0

    def rows(self):
        cols = [self.t, np.degrees(self.zenith), loss_db(self.T_atm), loss_db(self.T_geo), loss_db(self.T_point),
                loss_db(self.T_scint), loss_db(self.T_total), self.d]
        return zip(*(np.atleast_1d(c) for c in cols))

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in self.rows():
            w.writerow([f"{v:.9g}" for v in row])
        return buf.getvalue()


def histogram(loss_values_db, bins: int = 50) -> list[tuple[float, float, float]]:
    """[(bin_left_dB, bin_right_dB, probability)] for a sample of losses in dB."""
    v = np.asarray(loss_values_db, dtype=float)
    if v.size == 0:
        raise ValueError("no samples")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        hi = lo + 1e-9
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts / v.size
    return [(float(a), float(b), float(c)) for a, b, c in zip(edges[:-1], edges[1:], p)]


def histogram_csv(hist, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        for line in header_comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write("bin_left_dB,bin_right_dB,probability\n")
    for a, b, c in hist:
        buf.write(f"{a:.9g},{b:.9g},{c:.9g}\n")
    return buf.getvalue()

