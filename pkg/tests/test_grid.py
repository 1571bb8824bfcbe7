import math
import struct

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmnls.grid import (Field, Grid, GridMismatchError, derivative, from_spectrum, gaussian, inner,
                        make_grid, norm_dx, norm_h1, norm_l2, read_snapshot, shift, to_spectrum,
                        write_snapshot)


def dft_matrix(n):
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) / math.sqrt(n)


def test_grid_small_definition():
    g = make_grid(16.0, 8)
    assert g.dx == 4.0
    k = np.rint(g.eta * 16 / np.pi).astype(int)
    assert sorted(k.tolist()) == list(range(-4, 4))
    assert np.allclose(np.sort(g.eta), np.pi * np.arange(-4, 4) / 16, atol=0, rtol=0)


def test_grid_default_spacing():
    assert make_grid(20.0, 1024).dx == 0.0390625


@pytest.mark.parametrize("L, n", [(1.0, 7), (1.0, 6), (0.0, 16), (-2.0, 16)])
def test_grid_rejects_bad_parameters(L, n):
    with pytest.raises(ValueError):
        make_grid(L, n)


def test_grid_points_cover_box():
    g = make_grid(20.0, 64)
    assert g.x[0] == -20.0
    assert np.isclose(g.x[-1] + g.dx, 20.0)


def test_constant_field_is_dc():
    g = make_grid(5.0, 32)
    s = to_spectrum(g.field(np.ones(32)))
    k0 = int(np.argmin(np.abs(g.eta)))
    assert abs(s[k0] - math.sqrt(32)) < 1e-12
    assert np.max(np.abs(np.delete(s, k0))) < 1e-12


def test_plane_wave_single_mode():
    g = make_grid(5.0, 32)
    k1 = int(np.argmin(np.abs(g.eta - np.pi / 5)))
    s = to_spectrum(g.field(np.exp(1j * g.eta[k1] * g.x)))
    assert np.max(np.abs(np.delete(s, k1))) < 1e-12
    assert abs(s[k1]) > 1


def test_transform_matches_direct_dft():
    g = make_grid(3.0, 64)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    s = to_spectrum(g.field(v))
    assert np.max(np.abs(s - dft_matrix(64) @ v)) < 1e-12
    back = from_spectrum(s, g).values
    assert np.max(np.abs(back - np.conj(dft_matrix(64)).T @ s)) < 1e-12
    assert np.max(np.abs(back - v)) < 1e-12


def test_gaussian_mass_against_high_precision_integral():
    mpmath.mp.dps = 30
    oracle = float(mpmath.quad(lambda x: mpmath.e ** (-x**2), [-mpmath.inf, mpmath.inf]))
    assert abs(oracle - 1.7724539) < 1e-7
    f = gaussian(make_grid(20.0, 1024))
    assert abs(norm_l2(f) ** 2 - oracle) < 1e-12


def test_zero_field_norms():
    g = make_grid(20.0, 64)
    z = g.zeros()
    assert norm_l2(z) == norm_dx(z) == norm_h1(z) == 0.0


def test_plane_wave_mass():
    g = make_grid(20.0, 128)
    f = g.field(np.exp(1j * np.pi / 20 * g.x))
    assert abs(norm_l2(f) ** 2 - 40.0) < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([16, 64, 256]))
def test_plancherel_and_inner(seed, n):
    g = make_grid(7.0, n)
    rng = np.random.default_rng(seed)
    f = g.field(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    m_x = g.dx * np.sum(np.abs(f.values) ** 2)
    m_k = g.dx * np.sum(np.abs(f.spectrum()) ** 2)
    assert abs(m_x - m_k) <= 1e-12 * m_x
    ip = inner(f, f)
    assert abs(ip.imag) <= 1e-12 * abs(ip)
    assert abs(ip.real - norm_l2(f) ** 2) <= 1e-12 * ip.real


def test_second_derivative_is_minus_eta_squared():
    g = make_grid(10.0, 128)
    f = gaussian(g, 1.0, 1.3)
    twice = derivative(derivative(f))
    direct = from_spectrum(-g.eta2 * f.spectrum(), g)
    assert np.max(np.abs(twice.values - direct.values)) < 1e-13
    assert np.max(np.abs(derivative(f, 2).values - direct.values)) < 1e-13


def test_derivative_of_gaussian(grid):
    f = gaussian(grid)
    assert np.max(np.abs(derivative(f).values + grid.x * f.values)) < 1e-12
    assert abs(norm_dx(f) ** 2 - math.sqrt(math.pi) / 2) < 1e-12


def test_grid_shift_is_exact_roll(grid):
    f = gaussian(grid, 1.0, 1.0, 0.3)
    g = shift(f, 5 * grid.dx)
    assert np.max(np.abs(g.values - np.roll(f.values, 5))) < 1e-12


def test_field_arithmetic_and_mismatch():
    g1, g2 = make_grid(5.0, 16), make_grid(6.0, 16)
    a = g1.field(np.ones(16))
    assert np.all((a + a).values == 2) and np.all((a * 3 - a).values == 2)
    with pytest.raises(GridMismatchError):
        a + g2.field(np.ones(16))
    with pytest.raises(ValueError):
        Field(g1, np.ones(15))


def test_fields_are_read_only():
    f = make_grid(5.0, 16).field(np.ones(16))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_snapshot_round_trip_and_layout(tmp_path):
    g = make_grid(12.5, 32)
    rng = np.random.default_rng(3)
    f = g.field(rng.standard_normal(32) + 1j * rng.standard_normal(32))
    p = tmp_path / "s.bin"
    write_snapshot(p, f, 0.75)
    raw = p.read_bytes()
    assert len(raw) == 32 + 32 * 16
    magic, n, L, t = struct.unpack("<8sI4xdd", raw[:32])
    assert magic == b"DMNLS1\x00\x00" and n == 32 and L == 12.5 and t == 0.75
    pairs = np.frombuffer(raw[32:], dtype="<f8").reshape(-1, 2)
    assert np.array_equal(pairs[:, 0] + 1j * pairs[:, 1], f.values)
    h, t2 = read_snapshot(p)
    assert t2 == 0.75 and h.grid == g and np.array_equal(h.values, f.values)


def test_snapshot_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTMAGIC" + bytes(24 + 8 * 16))
    with pytest.raises(ValueError):
        read_snapshot(p)
