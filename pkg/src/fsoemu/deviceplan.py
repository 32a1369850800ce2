"""Actuator command schedules for the attenuator, steering mirror and deformable mirror.

All resampling is zero-order hold. Commands outside an actuator's range are
clipped, and each clip is recorded as a :class:`ClipEvent`.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrbitPass, sample_times, zenith_at, zenith_rate
from .zernike import N_MODES, ZernikeVector, decompose

TIP_TILT = (0, 1, 2)  # zero-based indices of Noll modes 1-3 (piston, tip, tilt)
FSM_MODES = ("gaussian", "uniform")


@dataclass(frozen=True)
class ActuatorLimits:
    voa_rate: float = 1.8
    voa_od_range: tuple[float, float] = (0.0, 4.0)
    fsm_rate: float = 1000.0
    fsm_range_x: float = 4.5
    fsm_range_y: float = 2.0
    dm_rate: float = 1000.0
    dm_modes: int = N_MODES
    lever_arm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "voa_od_range", tuple(float(v) for v in self.voa_od_range))
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        for name in ("voa_rate", "fsm_rate", "dm_rate"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        lo, hi = self.voa_od_range
        if not 0 <= lo < hi:
            errors.append("voa_od_range must satisfy 0 <= low < high")
        if not (self.fsm_range_x > 0 and self.fsm_range_y > 0):
            errors.append("fsm ranges must be > 0 deg")
        if self.dm_modes != N_MODES:
            errors.append(f"dm_modes must be {N_MODES}")
        if not self.lever_arm > 0:
            errors.append("lever_arm must be > 0")
        return errors


@dataclass(frozen=True)
class ClipEvent:
    actuator: str
    t: float
    axis: str
    demanded: float
    applied: float


@dataclass
class DevicePlan:
    voa_schedule: list = field(default_factory=list)  # (t, od)
    fsm_schedule: list = field(default_factory=list)  # (t, deg_x, deg_y)
    dm_schedule: list = field(default_factory=list)  # (t, ZernikeVector)
    clip_events: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def command_times(t_start: float, t_end: float, rate: float) -> np.ndarray:
    """Update instants t_start + k / rate strictly before ``t_end``."""
    n = math.ceil((t_end - t_start) * rate - 1e-9)
    return t_start + np.arange(max(n, 1)) / rate


def resample_zoh(t_src, values, t_new) -> np.ndarray:
    """Value of the most recent source sample at each new time."""
    t_src = np.asarray(t_src, dtype=float)
    idx = np.searchsorted(t_src, np.asarray(t_new, dtype=float), side="right") - 1
    return np.asarray(values)[np.clip(idx, 0, t_src.size - 1)]


def _clip(actuator, axis, t, demand, lo, hi, events):
    applied = np.clip(demand, lo, hi)
    for i in np.flatnonzero(applied != demand):
        events.append(ClipEvent(actuator, float(t[i]), axis, float(demand[i]), float(applied[i])))
    return applied


# ---------------------------------------------------------------- attenuator

def compile_voa(series, limits: ActuatorLimits, events: list | None = None) -> list[tuple[float, float]]:
    """OD schedule reproducing T_atm * T_geo(d=0) at the attenuator rate."""
    events = [] if events is None else events
    t_end = series.t[-1] if len(series) > 1 else series.t[0] + 1.0 / limits.voa_rate
    t = command_times(series.t[0], t_end, limits.voa_rate)
    od = -np.log10(resample_zoh(series.t, series.T_voa, t))
    od = _clip("voa", "od", t, od, *limits.voa_od_range, events)
    return [(float(a), float(b)) for a, b in zip(t, od)]


def voa_transmittance(schedule, t) -> np.ndarray:
    """Transmittance the attenuator applies at times ``t`` (hold semantics)."""
    ts = np.array([s[0] for s in schedule])
    od = np.array([s[1] for s in schedule])
    return 10.0 ** (-resample_zoh(ts, od, t))


# ---------------------------------------------------------------- steering mirror

def max_displacement(d_det: float, wander_variance: float, k: float = 3.0) -> float:
    """Bound on beam-centre offset: deterministic part plus k sigma of wander."""
    return d_det + k * math.sqrt(wander_variance)


def displacement_samples(states, limits: ActuatorLimits, gen: np.random.Generator, mode: str = "gaussian"):
    """(t, dx, dy) at the mirror rate across the pass, holding each pass point's statistics.

    ``gaussian``: deterministic offset along x plus isotropic Gaussian wander.
    ``uniform``: uniform over the disk of radius :func:`max_displacement`.
    """
    if mode not in FSM_MODES:
        raise ValueError(f"mode must be one of {FSM_MODES}")
    ts = np.array([s.t for s in states])
    t_end = ts[-1] if ts.size > 1 else ts[0] + 1.0 / limits.fsm_rate
    t = command_times(ts[0], t_end, limits.fsm_rate)
    idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 1)
    d_det = np.array([s.d_det for s in states])[idx]
    var = np.array([s.wander_variance for s in states])[idx]
    if mode == "gaussian":
        s = np.sqrt(var / 2.0)
        g = gen.standard_normal((2, t.size))
        return t, d_det + s * g[0], s * g[1]
    r = np.array([max_displacement(s.d_det, s.wander_variance) for s in states])[idx] * np.sqrt(gen.random(t.size))
    a = 2 * np.pi * gen.random(t.size)
    return t, r * np.cos(a), r * np.sin(a)


def displacement_to_angle(d, lever_arm: float):
    """Mirror tilt (deg) giving receiver-plane offset ``d``; reflection doubles the deflection."""
    if not lever_arm > 0:
        raise ValueError("lever_arm must be > 0")
    return np.degrees(np.arctan(np.asarray(d, dtype=float) / lever_arm) / 2.0)


def compile_fsm(t, dx, dy, limits: ActuatorLimits, events: list | None = None) -> list[tuple[float, float, float]]:
    """Two-axis mirror angles at the mirror rate from displacement samples."""
    events = [] if events is None else events
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        return []
    t_cmd = command_times(t[0], t[-1] + 1.0 / limits.fsm_rate, limits.fsm_rate)
    ax = displacement_to_angle(resample_zoh(t, dx, t_cmd), limits.lever_arm)
    ay = displacement_to_angle(resample_zoh(t, dy, t_cmd), limits.lever_arm)
    ax = _clip("fsm", "x", t_cmd, ax, -limits.fsm_range_x, limits.fsm_range_x, events)
    ay = _clip("fsm", "y", t_cmd, ay, -limits.fsm_range_y, limits.fsm_range_y, events)
    return list(zip(t_cmd.tolist(), ax.tolist(), ay.tolist()))


# ---------------------------------------------------------------- deformable mirror

def dm_frame(vector: ZernikeVector) -> ZernikeVector:
    """Copy of ``vector`` with piston and tip/tilt removed (those go to the steering mirror)."""
    c = vector.coefficients.copy()
    c[list(TIP_TILT)] = 0.0
    return ZernikeVector(c, units=vector.units, aperture_radius=vector.aperture_radius)


def compile_dm_coefficients(t, coefficients, limits: ActuatorLimits) -> list[tuple[float, ZernikeVector]]:
    """Frames from precomputed (k, 15) coefficients at times ``t``."""
    t = np.asarray(t, dtype=float)
    c = np.array(coefficients, dtype=float)
    if c.shape != (t.size, N_MODES):
        raise ValueError(f"coefficients must have shape ({t.size}, {N_MODES})")
    if t.size > 1 and np.min(np.diff(t)) < 1.0 / limits.dm_rate * (1 - 1e-9):
        raise ValueError(f"frames closer than 1/dm_rate = {1.0 / limits.dm_rate:g} s")
    c[:, list(TIP_TILT)] = 0.0
    return [(float(ti), ZernikeVector(ci)) for ti, ci in zip(t, c)]


def compile_dm(screens, limits: ActuatorLimits, t=None, aperture_diameter=None, obstruction: float = 0.0):
    """Decompose each screen and emit one frame per screen.

    Frames are at ``t`` if given, otherwise at the mirror rate from 0.
    """
    screens = list(screens)
    if t is None:
        t = np.arange(len(screens)) / limits.dm_rate
    vecs = [decompose(s, aperture_diameter, obstruction) for s in screens]
    frames = compile_dm_coefficients(t, [v.coefficients for v in vecs], limits)
    return [(ti, ZernikeVector(v.coefficients, units=u.units, aperture_radius=u.aperture_radius)) for (ti, v), u in zip(frames, vecs)]


# ---------------------------------------------------------------- staleness

@dataclass
class QuantizationReport:
    update_interval: float
    t: np.ndarray
    zenith_deg: np.ndarray
    step_deg: np.ndarray  # zenith change over one update interval at each t
    max_loss_step_db: float | None = None

    def step_at(self, zenith_deg: float) -> float:
        """Per-update zenith change at the pass point nearest ``zenith_deg``."""
        return float(self.step_deg[np.argmin(np.abs(np.abs(self.zenith_deg) - abs(zenith_deg)))])

    def to_text(self) -> str:
        lines = [
            f"update_interval_s: {self.update_interval:.9g}",
            f"step_at_min_zenith_deg: {self.step_deg[np.argmin(np.abs(self.zenith_deg))]:.9g}",
            f"step_at_edge_deg: {self.step_deg[np.argmax(np.abs(self.zenith_deg))]:.9g}",
            f"step_max_deg: {np.max(self.step_deg):.9g}",
        ]
        if self.max_loss_step_db is not None:
            lines.append(f"max_loss_step_dB: {self.max_loss_step_db:.9g}")
        lines.append("t_s,zenith_deg,step_deg")
        lines += [f"{a:.9g},{b:.9g},{c:.9g}" for a, b, c in zip(self.t, self.zenith_deg, self.step_deg)]
        return "\n".join(lines) + "\n"


def quantization_report(pass_: OrbitPass, limits: ActuatorLimits, series=None, law: str = "keplerian") -> QuantizationReport:
    """Zenith-angle change during one attenuator update interval across the pass.

    ``law="keplerian"`` uses the circular-orbit angular rate; ``"profile"``
    differentiates the emulated window's zenith law. With a loss ``series``
    the largest attenuator-loss change inside one interval is also reported.
    """
    dt = 1.0 / limits.voa_rate
    t = sample_times(pass_)
    zen = np.atleast_1d(zenith_at(t, pass_))
    if law == "keplerian":
        rate = np.array([zenith_rate(z, pass_.satellite_altitude, pass_.earth_radius) for z in zen])
    elif law == "profile":
        # one-sided difference: the zenith angle has a kink at culmination
        h = 1e-3
        t2 = np.minimum(t + h, pass_.pass_duration)
        rate = np.abs(np.atleast_1d(zenith_at(t2, pass_)) - np.atleast_1d(zenith_at(t2 - h, pass_))) / h
    else:
        raise ValueError("law must be 'keplerian' or 'profile'")
    # signed zenith: negative before culmination
    signed = np.where(t < pass_.pass_duration / 2, -1.0, 1.0) * np.degrees(zen)
    max_loss = None
    if series is not None:
        loss = -10 * np.log10(series.T_voa)
        starts = command_times(series.t[0], series.t[-1], limits.voa_rate)
        bins = np.searchsorted(starts, series.t, side="right") - 1
        max_loss = 0.0
        for b in np.unique(bins):
            seg = loss[bins == b]
            max_loss = max(max_loss, float(seg.max() - seg.min()))
    return QuantizationReport(dt, t, signed, np.degrees(rate) * dt, max_loss)


# ---------------------------------------------------------------- plan files

def _fmt(v: float) -> str:
    return f"{v:.9g}"


def plan_files(plan: DevicePlan, scenario_hash: str) -> dict[str, str]:
    """Delimited text for each actuator, keyed by file stem."""
    out = {}
    buf = io.StringIO()
    buf.write(f"# voa plan, t in s, od in optical density, scenario {scenario_hash}\nt_s,od\n")
    for t, od in plan.voa_schedule:
        buf.write(f"{_fmt(t)},{_fmt(od)}\n")
    out["voa"] = buf.getvalue()
    buf = io.StringIO()
    buf.write(f"# fsm plan, t in s, mirror angles in deg, scenario {scenario_hash}\nt_s,deg_x,deg_y\n")
    buf.writelines(f"{_fmt(t)},{_fmt(x)},{_fmt(y)}\n" for t, x, y in plan.fsm_schedule)
    out["fsm"] = buf.getvalue()
    buf = io.StringIO()
    units = plan.dm_schedule[0][1].units if plan.dm_schedule else "rad"
    buf.write(f"# dm plan, t in s, noll coefficients in {units}, scenario {scenario_hash}\n")
    buf.write("t_s," + ",".join(f"c{j}" for j in range(1, N_MODES + 1)) + "\n")
    for t, v in plan.dm_schedule:
        buf.write(_fmt(t) + "," + ",".join(_fmt(c) for c in v.coefficients) + "\n")
    out["dm"] = buf.getvalue()
    buf = io.StringIO()
    buf.write(f"# clip events, scenario {scenario_hash}\nactuator,t_s,axis,demanded,applied\n")
    for e in plan.clip_events:
        buf.write(f"{e.actuator},{_fmt(e.t)},{e.axis},{_fmt(e.demanded)},{_fmt(e.applied)}\n")
    out["clips"] = buf.getvalue()
    return out
