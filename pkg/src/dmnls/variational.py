"""Energy functional, its L2 gradient, and ground states on the mass sphere.

    E(f)      = (d_av / 2) ||f'||^2 - N(f)
    grad E(f) = -d_av f'' - Q(f)

Ground states minimize E on {||f||^2 = lambda}. The solver is a projected
gradient method on the sphere with Barzilai-Borwein step proposals, Armijo
backtracking (accepted iterates never increase the energy) and a diagonal
Sobolev preconditioner (c + d_av eta^2)^{-1}. Every iterate is renormalized
exactly onto the sphere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from dmnls.grid import Field, from_spectrum, gaussian
from dmnls.operators import NonlocalContext

log = logging.getLogger(__name__)


def energy_spectrum(ctx: NonlocalContext, s: np.ndarray) -> float:
    kinetic = ctx.grid.dx * float(np.sum(ctx.grid.eta2 * np.abs(s) ** 2))
    return 0.5 * ctx.d_av * kinetic - ctx.N_spectrum(s)


def gradient_spectrum(ctx: NonlocalContext, s: np.ndarray) -> np.ndarray:
    return ctx.d_av * ctx.grid.eta2 * s - ctx.Q_spectrum(s)


def energy(ctx: NonlocalContext, f: Field) -> float:
    ctx._check(f)
    return energy_spectrum(ctx, f.spectrum())


def energy_gradient(ctx: NonlocalContext, f: Field) -> Field:
    """L2 gradient w.r.t. the real inner product Re<f, g>."""
    ctx._check(f)
    return from_spectrum(gradient_spectrum(ctx, f.spectrum()), f.grid)


def _rdot(dx, a, b) -> float:
    return dx * float(np.real(np.vdot(a, b)))


@dataclass
class GroundStateResult:
    minimizer: Field
    lam: float
    omega: float
    energy: float
    residual: float
    iterations: int
    converged: bool
    energy_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    likely_no_ground_state: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "omega": self.omega,
            "energy": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "likely_no_ground_state": self.likely_no_ground_state,
        }


def multiplier_and_residual(ctx: NonlocalContext, f: Field) -> tuple[float, float]:
    """omega = Re<f, grad E> / ||f||^2 and ||grad E - omega f|| / ||f||."""
    s = f.spectrum()
    g = gradient_spectrum(ctx, s)
    dx = ctx.grid.dx
    m = _rdot(dx, s, s)
    omega = _rdot(dx, s, g) / m
    r = g - omega * s
    return omega, math.sqrt(_rdot(dx, r, r) / m)


def ground_state(ctx: NonlocalContext, lam: float, init: Field | None = None, tol: float = 1e-6,
                 max_iter: int = 5000, armijo: float = 1e-4, shift: float | None = None) -> GroundStateResult:
    """Minimize E on the sphere ||f||^2 = lam.

    Returns the last (lowest-energy) iterate; ``converged`` is False when
    max_iter is hit first.
    """
    if ctx.d_av < 0:
        raise ValueError("ground states need d_av >= 0; the energy is unbounded below for d_av < 0")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if init is None:
        sigma = best_gaussian_width(ctx, lam)
        init = gaussian(ctx.grid, 1.0, sigma)
    ctx._check(init)
    dx = ctx.grid.dx
    s = init.spectrum().copy()
    m = _rdot(dx, s, s)
    if m == 0:
        raise ValueError("initial guess must be nonzero")
    s *= math.sqrt(lam / m)

    def project(z):
        return z * math.sqrt(lam / _rdot(dx, z, z))

    E = energy_spectrum(ctx, s)
    g = gradient_spectrum(ctx, s)
    omega = _rdot(dx, s, g) / lam
    if shift is None:
        shift = max(1.0, abs(omega))
    precond = 1.0 / (shift + ctx.d_av * ctx.grid.eta2)

    def direction(s, g):
        pg, pf = precond * g, precond * s
        beta = _rdot(dx, s, pg) / _rdot(dx, s, pf)
        return pg - beta * pf

    G = direction(s, g)
    r_vec = g - omega * s
    residual = math.sqrt(_rdot(dx, r_vec, r_vec) / lam)
    energies, residuals = [E], [residual]
    tau = 1.0
    s_prev = G_prev = None
    converged = residual < tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        if s_prev is not None:
            S = s - s_prev
            Y = G - G_prev
            sy = _rdot(dx, S, Y)
            if sy > 0:
                tau = min(max(_rdot(dx, S, S) / sy, 1e-6), 1e4)
        slope = _rdot(dx, g, G)
        accepted = False
        trial = tau
        for _ in range(60):
            s_try = project(s - trial * G)
            E_try = energy_spectrum(ctx, s_try)
            decrease = armijo * trial * slope
            if E_try <= E - decrease or (E_try <= E and decrease < 1e-14 * max(1.0, abs(E))):
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            log.info("ground_state: line search stalled at iteration %d (residual %.3e)", it, residual)
            break
        s_prev, G_prev = s, G
        s, E = s_try, E_try
        g = gradient_spectrum(ctx, s)
        omega = _rdot(dx, s, g) / lam
        r_vec = g - omega * s
        residual = math.sqrt(_rdot(dx, r_vec, r_vec) / lam)
        G = direction(s, g)
        energies.append(E)
        residuals.append(residual)
        converged = residual < tol
    f = from_spectrum(s, ctx.grid)
    no_gs = (not converged) and E >= -1e-8 * lam
    return GroundStateResult(f, float(lam), float(omega), float(E), float(residual), it, bool(converged),
                             energies, residuals, bool(no_gs))


def gaussian_trial(ctx: NonlocalContext, lam: float, sigma: float) -> Field:
    amp = math.sqrt(lam / (sigma * math.sqrt(math.pi)))
    return gaussian(ctx.grid, amp, sigma)


def trial_energy(ctx: NonlocalContext, lam: float, sigma: float) -> float:
    return energy(ctx, gaussian_trial(ctx, lam, sigma))


def best_gaussian_width(ctx: NonlocalContext, lam: float, sigma_range=None) -> float:
    return _best_trial(ctx, lam, sigma_range)[0]


def _best_trial(ctx, lam, sigma_range=None):
    lo, hi = sigma_range or (4.0 * ctx.grid.dx, ctx.grid.L_box / 6.0)
    grid = np.geomspace(lo, hi, 41)
    vals = np.array([trial_energy(ctx, lam, s) for s in grid])
    k = int(np.argmin(vals))
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, len(grid) - 1)])
    if b > a:
        res = minimize_scalar(lambda ls: trial_energy(ctx, lam, math.exp(ls)), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-6})
        if res.fun < vals[k]:
            return math.exp(res.x), float(res.fun)
    return float(grid[k]), float(vals[k])


@dataclass
class ThresholdRow:
    lam: float
    sigma: float
    energy: float

    @property
    def sign(self) -> int:
        return int(np.sign(self.energy))


def threshold_scan(ctx: NonlocalContext, lam_grid, sigma_range=None) -> tuple[list[ThresholdRow], float | None]:
    """Best Gaussian trial energy for each lambda.

    The second return value is the smallest grid lambda with a negative best
    trial energy: an upper bound on the critical mass, or None.
    """
    lam_grid = [float(v) for v in lam_grid]
    if any(b <= a for a, b in zip(lam_grid, lam_grid[1:])):
        raise ValueError("lambda grid must be increasing")
    rows = []
    for lam in lam_grid:
        sigma, e = _best_trial(ctx, lam, sigma_range)
        rows.append(ThresholdRow(lam, sigma, e))
    neg = [r.lam for r in rows if r.energy < 0]
    return rows, (neg[0] if neg else None)
