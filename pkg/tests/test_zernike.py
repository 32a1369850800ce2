import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsoemu.zernike import (
    KOLMOGOROV_COEFF,
    N_MODES,
    NOLL_RESIDUAL,
    ZernikeVector,
    aperture_basis,
    decompose,
    nm_to_noll,
    noll_mode_variance,
    noll_residual_variance,
    noll_to_nm,
    reconstruct,
    residual,
    zernike_mode,
    zernike_radial,
)

NOLL_TABLE = [(0, 0), (1, 1), (1, -1), (2, 0), (2, -2), (2, 2), (3, -1), (3, 1), (3, -3), (3, 3),
              (4, 0), (4, 2), (4, -2), (4, 4), (4, -4)]


def test_noll_index_table():
    assert [noll_to_nm(j) for j in range(1, 16)] == NOLL_TABLE
    assert all(nm_to_noll(n, m) == j for j, (n, m) in enumerate(NOLL_TABLE, start=1))


def test_radial_polynomials():
    rho = np.linspace(0, 1, 11)
    np.testing.assert_allclose(zernike_radial(0, 0, rho), 1.0)
    np.testing.assert_allclose(zernike_radial(1, 1, rho), rho)
    assert zernike_radial(2, 0, 0.5) == pytest.approx(-0.5)
    assert zernike_radial(4, 0, 0.5) == pytest.approx(6 * 0.5**4 - 6 * 0.5**2 + 1)


def test_radial_rejects_bad_orders():
    with pytest.raises(ValueError):
        zernike_radial(3, 0, 0.5)
    with pytest.raises(ValueError):
        zernike_radial(2, 0, 1.5)


def test_mode_values():
    assert zernike_mode(1, 0.3, 1.0) == 1.0
    assert zernike_mode(4, 1.0, 0.0) == pytest.approx(math.sqrt(3))
    assert zernike_mode(2, 1.0, 0.0) == pytest.approx(2.0)
    assert zernike_mode(3, 1.0, math.pi / 2) == pytest.approx(2.0)


def test_orthonormal_on_fine_grid():
    n = 512
    mask, modes, _ = aperture_basis(n)
    gram = modes.T @ modes / mask.sum()
    np.testing.assert_allclose(gram, np.eye(N_MODES), atol=1e-3)


def test_decompose_pure_mode():
    n = 128
    mask, modes, _ = aperture_basis(n)
    grid = np.zeros((n, n))
    grid[mask] = 2.0 * modes[:, 4]
    v = decompose(grid)
    assert v[5] == pytest.approx(2.0, abs=1e-9)
    others = np.delete(v.coefficients, 4)
    assert np.max(np.abs(others)) < 1e-6
    assert v.residual_rms < 1e-9


def test_decompose_zero():
    v = decompose(np.zeros((64, 64)))
    assert np.all(v.coefficients == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_reduces_energy(seed):
    grid = np.random.default_rng(seed).standard_normal((64, 64))
    v = decompose(grid, obstruction=0.0)
    mask, _, _ = aperture_basis(64)
    r = residual(grid, v)
    assert np.sqrt(np.mean(r[mask] ** 2)) <= np.sqrt(np.mean(grid[mask] ** 2))
    assert v.residual_rms == pytest.approx(np.sqrt(np.mean(r[mask] ** 2)))


def test_reconstruct_round_trip_with_obstruction():
    c = np.arange(1, 16) / 10.0
    grid = reconstruct(c, 96, obstruction=0.3)
    v = decompose(grid, obstruction=0.3)
    np.testing.assert_allclose(v.coefficients, c, atol=1e-9)


def test_vector_text_round_trip():
    v = ZernikeVector(np.linspace(-1, 1, 15), aperture_radius=0.3)
    w = ZernikeVector.from_text(v.to_text())
    np.testing.assert_allclose(w.coefficients, v.coefficients, rtol=1e-8, atol=1e-15)
    assert w.aperture_radius == 0.3 and w.units == "rad"


def test_vector_shape_checked():
    with pytest.raises(ValueError):
        ZernikeVector(np.zeros(14))


def test_kolmogorov_coefficient():
    assert KOLMOGOROV_COEFF == pytest.approx(0.0228956, abs=1e-7)


def test_noll_table_values():
    assert noll_residual_variance(1, 1.0) == 1.0299
    assert noll_residual_variance(3, 1.0) == 0.134
    assert noll_residual_variance(3, 2.0) == pytest.approx(0.134 * 2 ** (5 / 3))


def test_mode_variances_consistent_with_residuals():
    # tip and tilt carry the drop from the first to the third residual
    tilt = noll_mode_variance(2)
    assert 2 * tilt == pytest.approx(NOLL_RESIDUAL[0] - NOLL_RESIDUAL[2], rel=5e-3)
    assert noll_mode_variance(4) == pytest.approx(NOLL_RESIDUAL[2] - NOLL_RESIDUAL[3], rel=2e-2)
    assert noll_mode_variance(3) == noll_mode_variance(2)


def test_noll_range_checked():
    with pytest.raises(ValueError):
        noll_residual_variance(16, 1.0)
    with pytest.raises(ValueError):
        noll_mode_variance(1)
