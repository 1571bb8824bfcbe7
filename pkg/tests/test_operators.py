import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import smooth_random_field
from dmnls.grid import derivative, gaussian, inner, make_grid, norm_l2, shift
from dmnls.nonlinearity import apply_P, builtin
from dmnls.operators import NonlocalContext, apply_Q, audit_q_bounds, free_propagate, nonlocal_N


def gaussian_free(x, r):
    c = 1.0 + 2j * r
    return np.exp(-x**2 / (2 * c)) / np.sqrt(c)


def kernel_oracle(x, r):
    """exp(i r d_x^2) e^{-y^2/2} at x, by the Schroedinger kernel integral."""
    mpmath.mp.dps = 25
    pref = 1 / mpmath.sqrt(4 * mpmath.pi * 1j * r)
    val = mpmath.quad(lambda y: mpmath.exp(-y**2 / 2 + 1j * (x - y) ** 2 / (4 * r)),
                      [-mpmath.inf, x, mpmath.inf])
    return complex(pref * val)


def test_plane_wave_eigenfunction(grid):
    k1 = np.pi / grid.L_box
    f = grid.field(np.exp(1j * k1 * grid.x))
    for r in (0.1, 0.7, -2.3, 15.0):
        out = free_propagate(f, r).values
        assert np.max(np.abs(out - np.exp(-1j * r * k1**2) * f.values)) < 1e-13


def test_gaussian_closed_form_matches_kernel_oracle():
    for x in (-2.0, -0.5, 0.0, 0.8, 3.0):
        assert abs(gaussian_free(np.array(x), 0.5) - kernel_oracle(x, 0.5)) < 1e-12


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
def test_gaussian_free_evolution(grid, r):
    out = free_propagate(gaussian(grid), r).values
    assert np.max(np.abs(out - gaussian_free(grid.x, r))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(-2, 2), st.floats(-2, 2))
def test_unitarity_and_group_law(seed, r, s):
    g = make_grid(10.0, 256)
    rng = np.random.default_rng(seed)
    f = g.field(rng.standard_normal(256) + 1j * rng.standard_normal(256))
    a = free_propagate(f, r)
    assert abs(norm_l2(a) - norm_l2(f)) <= 1e-13 * norm_l2(f)
    both = free_propagate(a, s).values
    assert np.max(np.abs(both - free_propagate(f, r + s).values)) <= 1e-12 * np.max(np.abs(f.values))


def test_derivative_commutes_with_propagator(grid):
    f = gaussian(grid, 1.0, 0.9, 0.4)
    a = derivative(free_propagate(f, 0.3)).values
    b = free_propagate(derivative(f), 0.3).values
    assert np.max(np.abs(a - b)) < 1e-14


def test_single_node_is_pointwise(grid, kerr):
    ctx = NonlocalContext.local(grid, kerr)
    f = smooth_random_field(grid, np.random.default_rng(0))
    assert np.max(np.abs(apply_Q(ctx, f).values - apply_P(kerr, f).values)) < 1e-13
    assert np.all(apply_Q(ctx, grid.zeros()).values == 0)


def test_quadratic_form_real_and_converged(grid, model_ctx):
    f = gaussian(grid)
    ip32 = inner(f, apply_Q(model_ctx(1.0, 32, False), f))
    ip256 = inner(f, apply_Q(model_ctx(1.0, 256, False), f))
    assert ip32.real > 0 and abs(ip32.imag) <= 1e-12 * abs(ip32)
    assert abs(ip32 - ip256) <= 1e-9 * abs(ip256)


@pytest.mark.parametrize("name", ["kerr", "saturating", "power"])
def test_quadratic_form_reality_random(grid, psi_model, name):
    nl = builtin(name, p=1.5) if name == "power" else builtin(name)
    ctx = NonlocalContext.from_psi(grid, nl, psi_model, 1.0, nodes_per_piece=16, dealias=False)
    rng = np.random.default_rng(5)
    for _ in range(5):
        f = smooth_random_field(grid, rng, scale=2.0)
        ip = inner(f, apply_Q(ctx, f))
        assert abs(ip.imag) <= 1e-10 * abs(ip)


def test_quadrature_refinement_monotone(grid, kerr):
    from dmnls.dispersion import DispersionProfile, psi_from_profile
    psi = psi_from_profile(DispersionProfile(0.0, ((1, 2), (1, -1), (1, -1))))
    f = gaussian(grid, 1.5, 0.7)
    qs = [apply_Q(NonlocalContext.from_psi(grid, kerr, psi, nodes_per_piece=n, dealias=False), f)
          for n in (1, 2, 4, 8)]
    gaps = [norm_l2(a - b) for a, b in zip(qs, qs[1:])]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_gauge_and_translation_covariance(grid, model_ctx):
    ctx = model_ctx(1.0, 16, False)
    f = gaussian(grid, 1.2, 0.8, -0.5)
    moved = shift(f, 7 * grid.dx) * np.exp(0.9j)
    lhs = apply_Q(ctx, moved).values
    rhs = np.exp(0.9j) * np.roll(apply_Q(ctx, f).values, 7)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_dealias_mask_applied(grid, model_ctx):
    q = apply_Q(model_ctx(1.0, 8, True), gaussian(grid, 2.0, 0.1)).spectrum()
    assert np.all(q[~grid.dealias_mask] == 0)


def test_potential_examples(grid, kerr, psi_model):
    local = NonlocalContext.local(grid, kerr)
    assert abs(nonlocal_N(local, gaussian(grid)) - 0.25 * math.sqrt(math.pi / 2)) < 1e-12
    ctx = NonlocalContext.from_psi(grid, kerr, psi_model, nodes_per_piece=8)
    assert nonlocal_N(ctx, grid.zeros()) == 0.0
    A = 0.7 - 0.2j
    const = grid.field(np.full(grid.n_points, A))
    assert abs(nonlocal_N(ctx, const) - abs(A) ** 4 / 4 * 2 * grid.L_box) < 1e-12


def test_context_validation(grid, kerr):
    with pytest.raises(ValueError):
        NonlocalContext(grid, kerr, np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        NonlocalContext(grid, kerr, np.array([0.0, 1.0]), np.array([1.5, -0.5]))


def test_q_bounds_stable_under_doubling(grid, model_ctx):
    ctx = model_ctx(1.0, 16, None)
    a, b = audit_q_bounds(ctx, 50, seed=3), audit_q_bounds(ctx, 100, seed=3)
    for x, y in ((a.bound_ratio, b.bound_ratio), (a.lipschitz_ratio, b.lipschitz_ratio)):
        assert math.isfinite(x) and math.isfinite(y) and x > 0
        assert max(x, y) / min(x, y) < 2


def test_q_bounds_skip_identical_pairs(grid, model_ctx):
    seeds = [audit_q_bounds(model_ctx(1.0, 4, None), 50, seed=s) for s in range(4)]
    assert any(r.skipped_pairs > 0 for r in seeds)
    assert all(math.isfinite(r.lipschitz_ratio) for r in seeds)


def test_pointwise_lipschitz_bound_local_kerr(grid, kerr):
    rep = audit_q_bounds(NonlocalContext.local(grid, kerr), 60, seed=1)
    assert rep.pointwise_bound_ok is True


def test_audit_ensemble_minimum(grid, kerr):
    with pytest.raises(ValueError):
        audit_q_bounds(NonlocalContext.local(grid, kerr), 10)
