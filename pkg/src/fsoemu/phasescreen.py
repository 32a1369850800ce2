"""FFT synthesis of finite von Karman phase screens.

The screen is the real part of an inverse FFT of complex white noise shaped by
the phase power spectrum

    PSD(f) = c * r0^(-5/3) * exp(-(f/fm)^2) / (f^2 + f0^2)^(11/6)

with f in cycles/m, f0 = 1/L0, fm = 5.92 / (2 pi l0) and c ~ 0.023 the
Kolmogorov coefficient. By default no low-frequency compensation is added,
so the screen is periodic with period N * pixel_scale and under-represents
scales beyond that (tip/tilt in particular). ``subharmonics=k`` moves the
lowest FFT bins into a separate sum of plane waves and adds ``k`` rings of
3x3 subharmonics, each wave at a random frequency inside its cell; about ten
rings are needed before tilt matches infinite-screen theory.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .turbulence import fried_parameter, path_integral
from .zernike import KOLMOGOROV_COEFF

DEFAULT_N = 256
DEFAULT_OUTER_SCALE = 25.0
DEFAULT_INNER_SCALE = 0.01

_MAGIC = b"FSOSCRN1"


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    grid: np.ndarray
    pixel_scale: float
    r0: float
    L0: float
    l0: float
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        n = g.shape[0]
        if g.ndim != 2 or g.shape[1] != n:
            raise ValueError("grid must be square")
        if n < 64 or n & (n - 1):
            raise ValueError("grid size must be a power of two >= 64")
        if not np.all(np.isfinite(g)):
            raise ValueError("grid values must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def extent(self) -> float:
        return self.n * self.pixel_scale

    def header(self) -> dict:
        return {"N": self.n, "pixel_scale": self.pixel_scale, "r0": self.r0, "L0": self.L0, "l0": self.l0, "seed": self.seed}

    def to_bytes(self) -> bytes:
        """Binary form: magic, ``N`` (u32), four float64 parameters, seed (i64, -1 if unset), then N*N float64 row-major."""
        head = _MAGIC + struct.pack("<I4dq", self.n, self.pixel_scale, self.r0, self.L0, self.l0, -1 if self.seed is None else self.seed)
        return head + self.grid.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PhaseScreen":
        if data[:8] != _MAGIC:
            raise ValueError("not a phase-screen file")
        size = struct.calcsize("<I4dq")
        n, ps, r0, big, small, seed = struct.unpack("<I4dq", data[8 : 8 + size])
        grid = np.frombuffer(data[8 + size :], dtype="<f8").reshape(n, n).copy()
        return cls(grid, ps, r0, big, small, None if seed < 0 else seed)

    def to_text(self) -> str:
        h = self.header()
        lines = ["# " + " ".join(f"{k}={v}" for k, v in h.items())]
        lines += [" ".join(f"{v:.9g}" for v in row) for row in self.grid]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PhaseScreen":
        lines = text.strip().splitlines()
        h = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
        grid = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
        seed = None if h["seed"] == "None" else int(h["seed"])
        return cls(grid, float(h["pixel_scale"]), float(h["r0"]), float(h["L0"]), float(h["l0"]), seed)


def phase_psd(f, r0: float, L0: float = DEFAULT_OUTER_SCALE, l0: float = DEFAULT_INNER_SCALE):
    """von Karman phase PSD in rad^2 m^2 at spatial frequency ``f`` (cycles/m)."""
    f = np.asarray(f, dtype=float)
    f0 = 0.0 if math.isinf(L0) else 1.0 / L0
    fm = 5.92 / (2 * math.pi * l0)
    with np.errstate(divide="ignore"):
        return KOLMOGOROV_COEFF * r0 ** (-5.0 / 3.0) * np.exp(-((f / fm) ** 2)) * (f**2 + f0**2) ** (-11.0 / 6.0)


def _validate(r0, n, pixel_scale, L0, l0):
    if not (r0 > 0 and pixel_scale > 0 and L0 > 0 and l0 > 0):
        raise ValueError("r0, pixel_scale, L0 and l0 must be > 0")
    if not l0 < L0:
        raise ValueError("l0 must be < L0")
    if n < 64 or n & (n - 1):
        raise ValueError("N must be a power of two >= 64")


def _low_order(r0, n, pixel_scale, L0, l0, gen, levels):
    # Frequencies below two FFT bins, plus ``levels`` finer 3x3 subharmonic
    # rings around the origin. Each cell gets one wave at a frequency drawn
    # uniformly inside the cell, weighted by the PSD there, so second-order
    # statistics of the low-frequency part are unbiased cell by cell.
    df0 = 1.0 / (n * pixel_scale)
    centres, sizes = [], []
    ring = [(i, j) for i in range(-2, 3) for j in range(-2, 3) if (i, j) != (0, 0)]
    centres += [(i * df0, j * df0) for i, j in ring]
    sizes += [df0] * len(ring)
    for p in range(1, levels + 1):
        df = df0 / 3**p
        cells = [(i * df, j * df) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
        centres += cells
        sizes += [df] * len(cells)
    centres, sizes = np.array(centres), np.array(sizes)
    f = centres + (gen.random(centres.shape) - 0.5) * sizes[:, None]
    amp = np.sqrt(phase_psd(np.hypot(f[:, 0], f[:, 1]), r0, L0, l0)) * sizes
    cn = (gen.standard_normal(len(sizes)) + 1j * gen.standard_normal(len(sizes))) * amp
    x = np.arange(n) * pixel_scale
    wx = np.exp(2j * np.pi * f[:, 0, None] * x[None, :])
    wy = np.exp(2j * np.pi * f[:, 1, None] * x[None, :])
    return ((wy.T * cn) @ wx).real


def screen_from_generator(
    r0, n, pixel_scale, L0, l0, gen: np.random.Generator, seed=None, subharmonics: int = 0
) -> PhaseScreen:
    """Screen from an explicit generator; ``subharmonics`` adds that many low-frequency levels."""
    _validate(r0, n, pixel_scale, L0, l0)
    df = 1.0 / (n * pixel_scale)
    f = np.fft.fftfreq(n, pixel_scale)
    fr = np.hypot(f[None, :], f[:, None])
    psd = phase_psd(fr, r0, L0, l0)
    if subharmonics:
        # these bins move to the randomised low-order sum
        k = np.r_[0:3, n - 2 : n]
        psd[np.ix_(k, k)] = 0.0
    psd[0, 0] = 0.0
    noise = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    grid = np.fft.ifft2(noise * np.sqrt(psd) * df).real * n * n
    if subharmonics:
        grid = grid + _low_order(r0, n, pixel_scale, L0, l0, gen, subharmonics)
    meta = {"generator": "fft", "subharmonics": subharmonics}
    if n * pixel_scale < L0:
        meta["warning"] = f"screen extent {n * pixel_scale:.4g} m is smaller than L0 = {L0:.4g} m; large scales are truncated"
    return PhaseScreen(grid, pixel_scale, r0, L0, l0, seed, meta)


def generate_screen(
    r0: float,
    N: int = DEFAULT_N,
    pixel_scale: float = 0.01,
    L0: float = DEFAULT_OUTER_SCALE,
    l0: float = DEFAULT_INNER_SCALE,
    seed: int = 0,
    subharmonics: int = 0,
) -> PhaseScreen:
    """One screen, bit-identical for a given ``seed``; ``L0`` may be ``inf``."""
    gen = rng_mod.stream(seed, "phasescreen")
    return screen_from_generator(r0, N, pixel_scale, L0, l0, gen, seed, subharmonics)


def screen_for_pass_point(
    pass_point,
    profile,
    optics,
    direction: str,
    seed: int,
    orbit,
    time_index: int = 0,
    N: int = DEFAULT_N,
    oversize: float = 1.0,
    subharmonics: int = 0,
) -> PhaseScreen:
    """Screen at one pass point, with r0 from the path integral.

    The grid spans ``oversize`` times the receiver aperture; the aperture
    itself is the inscribed circle when ``oversize == 1``. Screens are keyed by
    (seed, wavelength, time index).
    """
    if oversize < 1:
        raise ValueError("oversize must be >= 1")
    r0 = fried_parameter(path_integral(pass_point, profile, direction, orbit), optics.wavelength)
    gen = rng_mod.stream(seed, "screen", round(optics.wavelength * 1e12), time_index)
    screen = screen_from_generator(
        r0, N, oversize * optics.rx_aperture / N, profile.outer_scale, profile.inner_scale, gen, seed, subharmonics
    )
    screen.metadata.update(time_index=time_index, zenith=pass_point.zenith, direction=direction)
    return screen


def structure_function(grids: np.ndarray, lags, axis: int = -1) -> np.ndarray:
    """Ensemble-average D(r) = <(phi(x + r) - phi(x))^2> along ``axis``.

    ``lags`` is either a maximum lag (giving lags 1..max) or a sequence of lags
    in pixels; the result has one entry per lag.
    """
    grids = np.asarray(grids, dtype=float)
    if grids.ndim == 2:
        grids = grids[None]
    ax = grids.ndim + axis if axis < 0 else axis
    n = grids.shape[ax]
    lags = np.arange(1, int(lags) + 1) if np.isscalar(lags) else np.asarray(lags, dtype=int)
    if lags.size == 0 or lags.min() < 1 or lags.max() >= n:
        raise ValueError(f"lags must lie in [1, {n - 1}]")
    out = np.empty(lags.size)
    for i, lag in enumerate(lags):
        a = np.take(grids, np.arange(lag, n), axis=ax)
        b = np.take(grids, np.arange(0, n - lag), axis=ax)
        out[i] = np.mean((a - b) ** 2)
    return out
