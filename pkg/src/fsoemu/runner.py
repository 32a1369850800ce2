"""Full-pass orchestration: loss series, histograms, fits, key rate and device plans."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from . import rng as rng_mod
from .config import Scenario, scenario_hash
from .deviceplan import (
    DevicePlan,
    command_times,
    compile_dm,
    compile_fsm,
    compile_voa,
    displacement_samples,
    plan_files,
    quantization_report,
)
from .geometry import zenith_profile
from .keyrate import KeyRateReport, key_rate_report
from .losschannels import (
    LossTimeSeries,
    channel_state,
    histogram,
    histogram_csv,
    loss_db,
    sample_state,
)
from .phasescreen import screen_for_pass_point

FAMILIES = ("weibull", "lognormal")
FIT_METHODS = ("mle", "mm")

# Inputs the source material never pins down; echoed into every output header.
FLAGGED_DEFAULTS = (
    "profile.wind_speed",
    "profile.power_law",
    "profile.background",
    "profile.ceiling",
    "profile.inner_scale",
    "profile.outer_scale",
    "optics.zenith_transmittance_550",
    "optics.extinction_exponent",
    "optics.beam_waist",
    "limits.lever_arm",
    "run.screen_size",
)


@dataclass(frozen=True)
class FitResult:
    family: str
    params: dict
    ks_statistic: float
    p_value: float
    n: int
    degenerate: bool = False
    method: str = "mle"

    def to_text(self) -> str:
        if self.degenerate:
            return f"{self.family}: degenerate (n={self.n}, zero variance)\n"
        p = ", ".join(f"{k}={v:.9g}" for k, v in self.params.items())
        return f"{self.family} ({self.method}): {p}; ks_statistic={self.ks_statistic:.9g}; p_value={self.p_value:.9g}; n={self.n}\n"


def fit_distributions(samples, family: str, method: str = "mle") -> FitResult:
    """Parametric fit plus a K-S test against the fitted distribution.

    ``weibull`` fits shape, location and scale; ``lognormal`` fits shape and
    scale with location fixed at zero (samples must be positive).
    ``method`` is ``"mle"`` (maximum likelihood) or ``"mm"`` (method of
    moments). For the lognormal with zero location the two coincide.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    if method not in FIT_METHODS:
        raise ValueError(f"method must be one of {FIT_METHODS}")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("need at least 100 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if np.ptp(x) <= 1e-12 * max(1.0, abs(float(x[0]))):
        return FitResult(family, {}, math.nan, math.nan, x.size, degenerate=True, method=method)
    if family == "weibull":
        shape, loc, scale = stats.weibull_min.fit(x, method=method.upper())
        ks = stats.kstest(x, "weibull_min", args=(shape, loc, scale))
        params = {"shape": shape, "loc": loc, "scale": scale}
    else:
        if np.any(x <= 0):
            raise ValueError("lognormal fit needs positive samples")
        shape, _, scale = stats.lognorm.fit(x, floc=0.0)
        ks = stats.kstest(x, "lognorm", args=(shape, 0.0, scale))
        params = {"sigma": shape, "mu": math.log(scale)}
    return FitResult(family, params, float(ks.statistic), float(ks.pvalue), x.size, method=method)


@dataclass
class WavelengthResult:
    wavelength: float
    series: LossTimeSeries
    states: list
    histograms: dict
    fits: dict
    report: KeyRateReport
    plan: DevicePlan | None = None
    samples: dict = field(default_factory=dict)

    @property
    def nm(self) -> int:
        return round(self.wavelength * 1e9)


def _nm(optics) -> int:
    return round(optics.wavelength * 1e9)


def _hold_indices(t: np.ndarray, rate: float) -> np.ndarray:
    # Series index whose value the attenuator shows at each series time.
    cmd = command_times(t[0], t[-1], rate)
    src = np.searchsorted(t, cmd, side="right") - 1
    k = np.searchsorted(cmd, t, side="right") - 1
    return src[np.clip(k, 0, cmd.size - 1)]


def simulate_wavelength(
    scenario: Scenario,
    optics,
    with_plan: bool = True,
    with_screens: bool = True,
    with_histograms: bool = True,
) -> WavelengthResult:
    orbit, profile, run = scenario.pass_, scenario.profile, scenario.run
    nm = _nm(optics)
    path = zenith_profile(orbit)
    states = [channel_state(pp, profile, optics, scenario.direction, orbit) for pp in path]

    draws = [sample_state(s, optics, rng_mod.stream(scenario.seed, "loss", nm, i), 1) for i, s in enumerate(states)]
    t = np.array([s.t for s in states])
    t_atm = np.array([s.T_atm for s in states])
    t_geo = np.array([s.T_geo for s in states])
    if run.device_faithful:
        idx = _hold_indices(t, scenario.limits.voa_rate)
        t_atm, t_geo = t_atm[idx], t_geo[idx]
    series = LossTimeSeries(
        t=t,
        zenith=np.array([s.zenith for s in states]),
        T_atm=t_atm,
        T_geo=t_geo,
        T_point=np.array([d["T_point"][0] for d in draws]),
        T_scint=np.array([d["T_scint"][0] for d in draws]),
        d=np.array([d["d"][0] for d in draws]),
        coupling=optics.coupling,
        wavelength=optics.wavelength,
    )

    histograms, fits, samples = {}, {}, {}
    if with_histograms:
        pooled = [sample_state(s, optics, rng_mod.stream(scenario.seed, "hist", nm, i), run.histogram_draws) for i, s in enumerate(states)]
        point = np.concatenate([p["T_point"] for p in pooled])
        scint = np.concatenate([p["T_scint"] for p in pooled])
        voa = np.repeat(series.T_voa, run.histogram_draws)
        total = voa * point * scint * optics.coupling
        samples = {"pointing": loss_db(point), "scintillation": loss_db(scint), "total": loss_db(total)}
        histograms = {k: histogram(v, run.histogram_bins) for k, v in samples.items()}
        fits = {
            "pointing": fit_distributions(samples["pointing"], "weibull", run.fit_method),
            "scintillation": fit_distributions(scint, "lognormal", run.fit_method),
        }

    report = key_rate_report(series, scenario.keyrate, run.trusted_coupling)

    plan = None
    if with_plan:
        events: list = []
        plan = DevicePlan(clip_events=events)
        plan.voa_schedule = compile_voa(series, scenario.limits, events)
        tf, dx, dy = displacement_samples(states, scenario.limits, rng_mod.stream(scenario.seed, "fsm", nm), run.fsm_mode)
        plan.fsm_schedule = compile_fsm(tf, dx, dy, scenario.limits, events)
        if with_screens:
            picks = list(range(0, len(path), run.screen_stride))
            screens = [
                screen_for_pass_point(path[i], profile, optics, scenario.direction, scenario.seed, orbit, time_index=i,
                                      N=run.screen_size, oversize=run.screen_oversize, subharmonics=run.screen_subharmonics)
                for i in picks
            ]
            plan.dm_schedule = compile_dm(screens, scenario.limits, t=t[picks], aperture_diameter=optics.rx_aperture)
        plan.metadata = {"scenario_hash": scenario_hash(scenario), "seed": scenario.seed}
    return WavelengthResult(optics.wavelength, series, states, histograms, fits, report, plan, samples)


def select_optics(scenario: Scenario, wavelengths_nm=None):
    if not wavelengths_nm:
        return list(scenario.optics)
    wanted = {round(w) for w in wavelengths_nm}
    chosen = [o for o in scenario.optics if _nm(o) in wanted]
    missing = wanted - {_nm(o) for o in chosen}
    if missing:
        from .config import ConfigError

        raise ConfigError([f"--wavelength: {sorted(missing)} nm not in the scenario optics"])
    return chosen


def run_pass(scenario: Scenario, wavelengths_nm=None, **kw) -> dict[int, WavelengthResult]:
    """Simulate every (selected) wavelength; keys are wavelengths in nm."""
    return {_nm(o): simulate_wavelength(scenario, o, **kw) for o in select_optics(scenario, wavelengths_nm)}


# ---------------------------------------------------------------- output files

def provenance(scenario: Scenario, command: str) -> str:
    return "\n".join([
        f"fsoemu {__version__}",
        f"command: {command}",
        f"config_hash: {scenario_hash(scenario)}",
        f"seed: {scenario.seed}",
        f"direction: {scenario.direction}",
        "unvalidated defaults: " + ", ".join(FLAGGED_DEFAULTS),
    ])


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_results(results: dict[int, WavelengthResult], scenario: Scenario, out_dir: str, command: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    meta = provenance(scenario, command)
    written = []
    for nm, res in sorted(results.items()):
        written.append(_write(out_dir, f"series_{nm}nm.csv", res.series.to_csv(meta + f"\nwavelength_nm: {nm}")))
        for mech, hist in res.histograms.items():
            written.append(_write(out_dir, f"hist_{mech}_{nm}nm.csv", histogram_csv(hist, meta + f"\nwavelength_nm: {nm}\nmechanism: {mech}")))
        if res.fits:
            body = "".join(f"# {line}\n" for line in meta.splitlines()) + "".join(f"{k} {v.to_text()}" for k, v in res.fits.items())
            written.append(_write(out_dir, f"fits_{nm}nm.txt", body))
        if res.plan is not None:
            for stem, text in plan_files(res.plan, scenario_hash(scenario)).items():
                written.append(_write(out_dir, f"plan_{stem}_{nm}nm.csv", text))
    if results:
        body = "".join(f"# {line}\n" for line in meta.splitlines())
        body += "\n".join(r.report.to_text() for _, r in sorted(results.items()))
        written.append(_write(out_dir, "keyrate_report.txt", body))
    return written


def write_quantization(scenario: Scenario, out_dir: str, results=None) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    meta = "".join(f"# {line}\n" for line in provenance(scenario, "quantization-report").splitlines())
    written = [_write(out_dir, "quantization_report.txt", meta + quantization_report(scenario.pass_, scenario.limits).to_text())]
    for nm, res in sorted((results or {}).items()):
        rep = quantization_report(scenario.pass_, scenario.limits, series=res.series)
        written.append(_write(out_dir, f"quantization_report_{nm}nm.txt", meta + rep.to_text()))
    return written
