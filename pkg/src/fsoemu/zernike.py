"""Zernike polynomials (Noll ordering and normalisation) and screen decomposition.

Noll index j -> (n, m) for the 15 modes handled here::

    j :  1  2  3  4  5  6  7  8  9 10 11 12 13 14 15
    n :  0  1  1  2  2  2  3  3  3  3  4  4  4  4  4
    m :  0  1 -1  0 -2  2 -1  1 -3  3  0  2 -2  4 -4

Positive m is the cosine term, negative m the sine term. Piston (j = 1) is
carried in every vector but has no effect on intensity and is ignored by the
mirror frames.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma

N_MODES = 15

# Piston-removed residual variance after correcting J modes, in units of
# (D/r0)^(5/3) (Noll 1976, table IV).
NOLL_RESIDUAL = (
    1.0299, 0.582, 0.134, 0.111, 0.0880, 0.0648, 0.0587, 0.0525,
    0.0463, 0.0401, 0.0377, 0.0352, 0.0328, 0.0304, 0.0279,
)

# Kolmogorov phase-spectrum coefficient, 0.023 to three figures.
KOLMOGOROV_COEFF = (24.0 / 5.0 * gamma(6.0 / 5.0)) ** (5.0 / 6.0) * gamma(11.0 / 6.0) ** 2 / (2.0 * math.pi ** (11.0 / 3.0))


def noll_to_nm(j: int) -> tuple[int, int]:
    if j < 1:
        raise ValueError("Noll index starts at 1")
    n = int((math.sqrt(8 * (j - 1) + 1) - 1) // 2)
    p = j - n * (n + 1) // 2
    k = n % 2
    m = ((p + k) // 2) * 2 - k
    if m != 0 and j % 2 == 1:
        m = -m
    return n, m


def nm_to_noll(n: int, m: int) -> int:
    for j in range(n * (n + 1) // 2 + 1, (n + 1) * (n + 2) // 2 + 1):
        if noll_to_nm(j) == (n, m):
            return j
    raise ValueError(f"no Noll index for n={n}, m={m}")


def zernike_radial(n: int, m: int, rho):
    """Radial polynomial R_n^m by its factorial sum."""
    m = abs(m)
    if m > n or (n - m) % 2:
        raise ValueError(f"invalid radial order n={n}, m={m}")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho > 1 + 1e-12):
        raise ValueError("rho must lie in [0, 1]")
    plus, minus = (n + m) // 2, (n - m) // 2
    out = np.zeros_like(rho)
    for s in range(minus + 1):
        c = (-1) ** s * math.factorial(n - s) / (
            math.factorial(s) * math.factorial(plus - s) * math.factorial(minus - s)
        )
        out = out + c * rho ** (n - 2 * s)
    return float(out) if out.ndim == 0 else out


def zernike_mode(j: int, rho, psi):
    """Noll-normalised mode ``j`` (unit RMS over the unit disk)."""
    if not 1 <= j <= N_MODES:
        raise ValueError(f"Noll index must be 1..{N_MODES}, got {j}")
    n, m = noll_to_nm(j)
    radial = zernike_radial(n, m, rho)
    psi = np.asarray(psi, dtype=float)
    if m == 0:
        out = math.sqrt(n + 1) * radial * np.ones_like(psi)
    elif m > 0:
        out = math.sqrt(2 * (n + 1)) * radial * np.cos(m * psi)
    else:
        out = math.sqrt(2 * (n + 1)) * radial * np.sin(-m * psi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ZernikeVector:
    coefficients: np.ndarray
    units: str = "rad"
    aperture_radius: float = 1.0
    residual_rms: float = 0.0
    ordering: str = field(default="noll", init=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (N_MODES,):
            raise ValueError(f"expected {N_MODES} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coefficients = c

    def __getitem__(self, j: int) -> float:
        """Coefficient of Noll mode ``j`` (1-based)."""
        return float(self.coefficients[j - 1])

    def to_text(self) -> str:
        header = f"# noll modes 1-{N_MODES}, units={self.units}, aperture_radius_m={self.aperture_radius:.9g}"
        return header + "\n" + ",".join(f"{c:.9g}" for c in self.coefficients) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ZernikeVector":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        units, radius = "rad", 1.0
        if lines[0].startswith("#"):
            for part in lines[0].lstrip("# ").split(","):
                key, _, val = part.strip().partition("=")
                if key == "units":
                    units = val
                elif key == "aperture_radius_m":
                    radius = float(val)
            lines = lines[1:]
        coeffs = [float(v) for v in lines[0].split(",")]
        return cls(np.array(coeffs), units=units, aperture_radius=radius)


@lru_cache(maxsize=32)
def _basis(n_pix: int, diameter_px: float, obstruction: float):
    # lru_cache is thread-safe for readers; arrays are returned read-only.
    c = (n_pix - 1) / 2.0
    yy, xx = np.mgrid[0:n_pix, 0:n_pix]
    x = (xx - c) / (diameter_px / 2.0)
    y = (yy - c) / (diameter_px / 2.0)
    rho = np.hypot(x, y)
    mask = (rho <= 1.0) & (rho >= obstruction)
    if mask.sum() < N_MODES:
        raise ValueError(f"aperture mask has {mask.sum()} pixels; need at least {N_MODES}")
    r, psi = rho[mask], np.arctan2(y[mask], x[mask])
    modes = np.stack([zernike_mode(j, r, psi) for j in range(1, N_MODES + 1)], axis=1)
    pinv = np.linalg.pinv(modes)
    for a in (mask, modes, pinv):
        a.setflags(write=False)
    return mask, modes, pinv


def aperture_basis(n_pix: int, diameter_px: float | None = None, obstruction: float = 0.0):
    """(mask, modes[n_valid, 15], pseudo-inverse) for a centred circular aperture."""
    if diameter_px is None:
        diameter_px = float(n_pix)
    return _basis(int(n_pix), float(diameter_px), float(obstruction))


def _screen_geometry(screen, aperture_diameter, obstruction):
    grid = np.asarray(screen.grid if hasattr(screen, "grid") else screen, dtype=float)
    n = grid.shape[0]
    if aperture_diameter is None:
        diameter_px = float(n)
        radius = n * getattr(screen, "pixel_scale", 1.0) / 2.0
    else:
        diameter_px = aperture_diameter / screen.pixel_scale
        radius = aperture_diameter / 2.0
    if diameter_px > n + 1e-9:
        raise ValueError("aperture larger than the screen")
    return grid, diameter_px, radius


def decompose(screen, aperture_diameter: float | None = None, obstruction: float = 0.0) -> ZernikeVector:
    """Least-squares projection of a screen onto Noll modes 1-15 over the pupil.

    ``screen`` is a :class:`~fsoemu.phasescreen.PhaseScreen` or a bare square
    array. The pupil is the inscribed circle unless ``aperture_diameter`` (m)
    is given; ``obstruction`` is the inner/outer diameter ratio.
    """
    grid, diameter_px, radius = _screen_geometry(screen, aperture_diameter, obstruction)
    mask, modes, pinv = aperture_basis(grid.shape[0], diameter_px, obstruction)
    values = grid[mask]
    coeffs = pinv @ values
    resid = values - modes @ coeffs
    return ZernikeVector(coeffs, aperture_radius=radius, residual_rms=float(np.sqrt(np.mean(resid**2))))


def decompose_many(grids: np.ndarray, diameter_px: float | None = None, obstruction: float = 0.0) -> np.ndarray:
    """Coefficients (k, 15) for a stack of square grids (k, N, N)."""
    grids = np.asarray(grids, dtype=float)
    mask, _, pinv = aperture_basis(grids.shape[-1], diameter_px, obstruction)
    return grids[:, mask] @ pinv.T


def reconstruct(vector, n_pix: int, diameter_px: float | None = None, obstruction: float = 0.0) -> np.ndarray:
    """Phase grid (zero outside the pupil) for a coefficient vector."""
    coeffs = vector.coefficients if isinstance(vector, ZernikeVector) else np.asarray(vector, dtype=float)
    mask, modes, _ = aperture_basis(n_pix, diameter_px, obstruction)
    out = np.zeros((n_pix, n_pix))
    out[mask] = modes @ coeffs
    return out


def residual(screen, vector: ZernikeVector, aperture_diameter: float | None = None, obstruction: float = 0.0) -> np.ndarray:
    """Screen minus its reconstruction, on the pupil (zero elsewhere)."""
    grid, diameter_px, _ = _screen_geometry(screen, aperture_diameter, obstruction)
    mask, _, _ = aperture_basis(grid.shape[0], diameter_px, obstruction)
    out = np.zeros_like(grid)
    out[mask] = grid[mask] - reconstruct(vector, grid.shape[0], diameter_px, obstruction)[mask]
    return out


def noll_residual_variance(j_max: int, d_over_r0: float) -> float:
    """Kolmogorov phase variance (rad^2) left after removing modes 1..j_max."""
    if not 1 <= j_max <= N_MODES:
        raise ValueError(f"j_max must be 1..{N_MODES}")
    if d_over_r0 <= 0:
        raise ValueError("D/r0 must be > 0")
    return NOLL_RESIDUAL[j_max - 1] * d_over_r0 ** (5.0 / 3.0)


def noll_mode_variance(j: int, d_over_r0: float = 1.0) -> float:
    """Kolmogorov variance of Noll mode ``j`` (rad^2); piston is infinite and excluded."""
    if not 2 <= j <= N_MODES:
        raise ValueError("mode variance defined for Noll indices 2..15")
    n, _ = noll_to_nm(j)
    return (
        KOLMOGOROV_COEFF * 8.0 * math.pi ** (8.0 / 3.0) * (n + 1) * gamma(14.0 / 3.0) * gamma(n - 5.0 / 6.0)
        / (2.0 ** (14.0 / 3.0) * gamma(17.0 / 6.0) ** 2 * gamma(n + 23.0 / 6.0))
    ) * d_over_r0 ** (5.0 / 3.0)
