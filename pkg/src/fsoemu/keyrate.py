"""Asymptotic GMCS CV-QKD key rate (homodyne, reverse reconciliation).

Three eavesdropper models are available through ``KeyRateParams.eve_model``:

``"los"`` (default)
    Eve passively collects a fraction ``T_E`` of the transmitted mode (the
    part of the beam that misses the receiver). The line is a beamsplitter of
    transmittance T whose second input is a thermal mode carrying the excess
    noise; Eve taps ``tau = T_E / (1 - T)`` of the reflected output. Her
    information is S(E) - S(E | x_B), evaluated from her single-mode
    covariance matrix. Gives chi_BE = 0 at T_E = 0.
``"los_closed_form"``
    The collective-attack eigenvalue formulas with T replaced by T_E.
    These are unphysical (eigenvalues below 1) in most of the satellite
    regime and raise :class:`PhysicalityError` there.
``"collective"``
    Standard entangling-cloner bound (Eve holds the purification, T_E =
    1 - T); comparison only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy.special import xlogy

EVE_MODELS = ("los", "los_closed_form", "collective")
EIGEN_TOL = 1e-9


class PhysicalityError(ValueError):
    """Symplectic eigenvalue below 1: parameters outside the model's validity."""


@dataclass(frozen=True)
class KeyRateParams:
    modulation_variance: float = 299.0
    reconciliation: float = 0.98
    excess_noise: float = 0.003
    detector_efficiency: float = 0.8
    electronic_noise: float = 0.0
    eve_transmittance: float = 0.01
    clock_rate: float = 2e6
    eve_model: str = "los"

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if not self.modulation_variance > 0:
            errors.append("modulation_variance must be > 0")
        if not 0 < self.reconciliation <= 1:
            errors.append("reconciliation must lie in (0, 1]")
        if self.excess_noise < 0:
            errors.append("excess_noise must be >= 0")
        if not 0 < self.detector_efficiency <= 1:
            errors.append("detector_efficiency must lie in (0, 1]")
        if self.electronic_noise < 0:
            errors.append("electronic_noise must be >= 0")
        if not 0 <= self.eve_transmittance <= 1:
            errors.append("eve_transmittance must lie in [0, 1]")
        if not self.clock_rate > 0:
            errors.append("clock_rate must be > 0")
        if self.eve_model not in EVE_MODELS:
            errors.append(f"eve_model must be one of {EVE_MODELS}")
        return errors

    @property
    def V(self) -> float:
        return self.modulation_variance + 1.0

    @property
    def chi_hom(self) -> float:
        eta = self.detector_efficiency
        return (1.0 - eta) / eta + self.electronic_noise


@dataclass(frozen=True)
class KeyRateResult:
    rate: float
    mutual_information: float
    holevo: float
    clamped: bool
    eigenvalues: tuple = ()
    flags: tuple = ()


def G(x):
    """Bosonic entropy function (x+1)log2(x+1) - x log2 x; G(0) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -EIGEN_TOL):
        raise PhysicalityError(f"G evaluated at negative argument {x}")
    x = np.maximum(x, 0.0)
    out = (xlogy(x + 1.0, x + 1.0) - xlogy(x, x)) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


def _check_T(T):
    T = np.asarray(T, dtype=float)
    if np.any(T < 0) or np.any(T > 1) or np.any(~np.isfinite(T)):
        raise ValueError("transmittance must lie in [0, 1]")
    return T


def _chi_line(T, p):
    return (1.0 - T) / T + p.excess_noise


def mutual_information(T, p: KeyRateParams):
    """I_AB in bits per use; 0 at T = 0 (the T -> 0 limit)."""
    T = _check_T(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi_tot = _chi_line(T, p) + p.chi_hom / T
        # log1p keeps full relative precision when V_A / (1 + chi) is tiny
        out = 0.5 * np.log1p(p.modulation_variance / (1.0 + chi_tot)) / math.log(2.0)
    out = np.where(T > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def _los(T, p):
    V, eta = p.V, p.detector_efficiency
    T_E = p.eve_transmittance
    W = 1.0 + T * p.excess_noise / (1.0 - T)
    tau = T_E / (1.0 - T)
    e = tau * ((1.0 - T) * V + T * W) + 1.0 - tau
    c2 = tau * T * (1.0 - T) * (V - W) ** 2
    var_m = eta * T * (V + _chi_line(T, p)) + (1.0 - eta) + eta * p.electronic_noise
    nu = np.sqrt(e * (e - eta * c2 / var_m))
    return G((e - 1) / 2) - G((nu - 1) / 2), (e, nu)


def _closed_form(T, T_E, p):
    V = p.V
    cl = _chi_line(T, p)
    ch = p.chi_hom
    ct = cl + ch / T
    A = V**2 * (1 - 2 * T_E) + 2 * T_E + T_E**2 * (V + cl) ** 2
    B = T_E**2 * (V * cl + 1) ** 2
    C = (A * ch + V * np.sqrt(B) + T_E * (V + cl)) / (T_E * (V + ct))
    D = np.sqrt(B) * (V + np.sqrt(B) * ch) / (T_E * (V + ct))
    with np.errstate(invalid="ignore"):
        l1 = np.sqrt((A + np.sqrt(A**2 - 4 * B)) / 2)
        l2 = np.sqrt((A - np.sqrt(A**2 - 4 * B)) / 2)
        l3 = np.sqrt((C + np.sqrt(C**2 - 4 * D)) / 2)
        l4 = np.sqrt((C - np.sqrt(C**2 - 4 * D)) / 2)
    lams = (l1, l2, l3, l4, np.ones_like(l1))
    return lams


def _collective(T, p):
    # Eve holds the purification; identical formulas with T_E -> T.
    return _closed_form(T, T, p)


def holevo_los(T, p: KeyRateParams):
    """(chi_BE, eigenvalues) in bits per use for the configured Eve model.

    Raises :class:`PhysicalityError` if any eigenvalue is below 1 - 1e-9 and
    ``ValueError`` if T_E > 1 - T (LoS models only).
    """
    T = _check_T(T)
    if np.any(T <= 0):
        raise ValueError("holevo bound needs T > 0")
    if p.eve_model != "collective" and np.any(p.eve_transmittance > 1.0 - T + 1e-15):
        raise ValueError(f"eve_transmittance {p.eve_transmittance} exceeds 1 - T")
    if p.eve_model == "los":
        if p.eve_transmittance == 0:
            ones = np.ones_like(T)
            return (0.0 if T.ndim == 0 else np.zeros_like(T)), (ones, ones)
        with np.errstate(divide="ignore", invalid="ignore"):
            chi, lams = _los(T, p)
    else:
        if p.eve_model == "los_closed_form" and p.eve_transmittance == 0:
            raise PhysicalityError("closed-form eigenvalues are undefined at T_E = 0")
        lams = _closed_form(T, p.eve_transmittance, p) if p.eve_model == "los_closed_form" else _collective(T, p)
    flat = np.array([np.atleast_1d(l) for l in lams])
    if np.any(~np.isfinite(flat)) or np.any(flat < 1.0 - EIGEN_TOL):
        raise PhysicalityError(
            f"unphysical symplectic eigenvalues for model {p.eve_model!r}: "
            + "; ".join(f"lambda{i + 1}={np.array2string(np.atleast_1d(l), precision=12)}" for i, l in enumerate(lams))
        )
    if p.eve_model != "los":
        l1, l2, l3, l4, l5 = (np.maximum(l, 1.0) for l in lams)
        chi = G((l1 - 1) / 2) + G((l2 - 1) / 2) - G((l3 - 1) / 2) - G((l4 - 1) / 2) - G((l5 - 1) / 2)
    chi = np.asarray(chi, dtype=float)
    return (float(chi) if chi.ndim == 0 else chi), lams


def key_rate(T: float, p: KeyRateParams) -> KeyRateResult:
    """K = max(0, beta I_AB - chi_BE) in bits per use, with a clamp flag."""
    T = float(T)
    if T == 0:
        return KeyRateResult(0.0, 0.0, 0.0, True, (), ("zero_transmittance",))
    i_ab = mutual_information(T, p)
    chi, lams = holevo_los(T, p)
    raw = p.reconciliation * i_ab - chi
    return KeyRateResult(max(0.0, raw), i_ab, chi, raw < 0, tuple(float(np.asarray(l)) for l in lams), ("clamped",) if raw < 0 else ())


def key_rates(T, p: KeyRateParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised clamped key rates and clamp mask for an array of transmittances."""
    T = np.atleast_1d(_check_T(T)).astype(float)
    out = np.zeros_like(T)
    pos = T > 0
    if np.any(pos):
        chi, _ = holevo_los(T[pos], p)
        out[pos] = p.reconciliation * mutual_information(T[pos], p) - chi
    clamped = out <= 0
    return np.maximum(out, 0.0), clamped


def time_weights(t) -> np.ndarray:
    """Trapezoid weights so the weights sum to the covered duration."""
    t = np.asarray(t, dtype=float)
    if t.size == 1:
        return np.ones(1)
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def key_bits_per_pass(series, p: KeyRateParams, trusted_coupling: bool = False) -> float:
    """Secret bits over the pass: sum of K(T_total(t)) * clock_rate * dt.

    With ``trusted_coupling`` the telescope coupling is moved out of the
    channel and into the (trusted) detector efficiency.
    """
    T = np.asarray(series.T_total, dtype=float)
    if trusted_coupling:
        T = T / series.coupling
        p = replace(p, detector_efficiency=p.detector_efficiency * series.coupling)
    rates, _ = key_rates(np.minimum(T, 1.0), p)
    return float(np.sum(rates * time_weights(series.t)) * p.clock_rate)


@dataclass(frozen=True)
class ModulationOptimum:
    modulation_variance: float | None
    mean_rate: float
    found: bool
    method: str = "golden"


def optimize_modulation(T_profile, p: KeyRateParams, bracket=(0.1, 1e4), tol: float = 1.0) -> ModulationOptimum:
    """Modulation variance (SNU) maximising the mean key rate over ``T_profile``."""
    T = np.sort(np.atleast_1d(np.asarray(T_profile, dtype=float)))
    if T.size == 0:
        raise ValueError("empty transmittance profile")

    def mean_rate(va):
        return float(np.mean(key_rates(T, replace(p, modulation_variance=float(va)))[0]))

    grid = np.geomspace(bracket[0], bracket[1], 81)
    vals = np.array([mean_rate(v) for v in grid])
    if not np.any(vals > 0):
        return ModulationOptimum(None, 0.0, False, "none")
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if 0 < k < grid.size - 1:
        try:
            res = optimize.minimize_scalar(lambda v: -mean_rate(v), bracket=(lo, grid[k], hi), method="golden", tol=tol / grid[k] / 10)
            if lo <= res.x <= hi and -res.fun >= vals[k]:
                return ModulationOptimum(float(res.x), float(-res.fun), True, "golden")
        except ValueError:
            pass
    # bracket failure: refine on a fine linear grid
    fine = np.arange(lo, hi + tol, tol)
    fv = np.array([mean_rate(v) for v in fine])
    j = int(np.argmax(fv))
    return ModulationOptimum(float(fine[j]), float(fv[j]), True, "grid")


@dataclass
class KeyRateReport:
    wavelength_nm: float
    mean_loss_dB: float
    bits_per_pass: float
    V_A_used: float
    clamped_fraction: float
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"wavelength_nm: {self.wavelength_nm:.9g}",
            f"mean_loss_dB: {self.mean_loss_dB:.9g}",
            f"bits_per_pass: {self.bits_per_pass:.9g}",
            f"V_A_used: {self.V_A_used:.9g}",
            f"clamped_fraction: {self.clamped_fraction:.9g}",
        ]
        lines += [f"{k}: {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"


def key_rate_report(series, p: KeyRateParams, trusted_coupling: bool = False) -> KeyRateReport:
    T = np.minimum(np.asarray(series.T_total, dtype=float), 1.0)
    _, clamped = key_rates(T if not trusted_coupling else T / series.coupling,
                           p if not trusted_coupling else replace(p, detector_efficiency=p.detector_efficiency * series.coupling))
    return KeyRateReport(
        wavelength_nm=series.wavelength * 1e9,
        mean_loss_dB=float(np.mean(-10 * np.log10(T))),
        bits_per_pass=key_bits_per_pass(series, p, trusted_coupling),
        V_A_used=p.modulation_variance,
        clamped_fraction=float(np.mean(clamped)),
        extra={"eve_model": p.eve_model},
    )
