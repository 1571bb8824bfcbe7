"""Orbit distance modulo phase and translation, and perturbation experiments.

The distance to the ground-state set is replaced by the distance to the
symmetry orbit {e^{i theta} f(. - y)} of one computed minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from dmnls.evolution import EvolutionConfig, evolve
from dmnls.grid import Field, GridMismatchError, from_spectrum, ifft
from dmnls.operators import NonlocalContext
from dmnls.variational import GroundStateResult

PERTURBATIONS = ("random-smooth", "mode-k", "scaling")


def _weights(f: Field, norm: str) -> np.ndarray:
    if norm == "L2":
        return np.ones(f.grid.n_points)
    if norm == "H1":
        return 1.0 + f.grid.eta2
    raise ValueError(f"norm must be 'L2' or 'H1', got {norm!r}")


def _xnorm(s, w, dx):
    return math.sqrt(dx * float(np.sum(w * np.abs(s) ** 2)))


def orbit_distance(u: Field, f: Field, norm: str = "L2") -> tuple[float, float, float]:
    """min over (y, theta) of ||u - e^{i theta} f(. - y)||, with the minimizers.

    All grid shifts are scored at once by a spectral cross-correlation; the
    peak is refined to sub-grid y by quadratic interpolation followed by a
    bounded scalar search on the continuous spectral shift.
    """
    if u.grid != f.grid:
        raise GridMismatchError("fields live on different grids")
    grid = u.grid
    n, dx = grid.n_points, grid.dx
    w = _weights(u, norm)
    su, sf = u.spectrum(), f.spectrum()
    cross = np.conj(sf) * w * su
    corr = dx * math.sqrt(n) * ifft(cross)
    mag = np.abs(corr)
    m = int(np.argmax(mag))

    def corr_at(y):
        return dx * complex(np.sum(cross * np.exp(1j * grid.eta * y)))

    c0, cm, cp = mag[m], mag[(m - 1) % n], mag[(m + 1) % n]
    denom = cm - 2.0 * c0 + cp
    frac = 0.5 * (cm - cp) / denom if denom < 0 else 0.0
    frac = float(np.clip(frac, -0.5, 0.5))
    m_signed = m - n if m >= n // 2 else m
    y_grid = m_signed * dx
    y_best, c_best = y_grid, corr[m]
    if mag[m] > 0:
        y0 = y_grid + frac * dx
        res = minimize_scalar(lambda y: -abs(corr_at(y)), bounds=(y0 - dx, y0 + dx),
                              method="bounded", options={"xatol": 1e-13 * max(1.0, grid.L_box)})
        c_cont = corr_at(res.x)
        if abs(c_cont) > abs(c_best):
            y_best, c_best = float(res.x), c_cont
    theta = float(np.angle(c_best)) if abs(c_best) > 0 else 0.0
    fy = np.exp(1j * theta) * np.exp(-1j * grid.eta * y_best) * sf
    dist = _xnorm(su - fy, w, dx)
    if y_best != y_grid:
        # the continuous refinement must never lose against the exact grid shift
        th_g = float(np.angle(corr[m])) if mag[m] > 0 else 0.0
        fg = np.exp(1j * th_g) * np.exp(-1j * grid.eta * y_grid) * sf
        dg = _xnorm(su - fg, w, dx)
        if dg <= dist:
            dist, y_best, theta = dg, y_grid, th_g
    return float(dist), float(y_best), float(theta)


def make_perturbation(f: Field, kind: str, norm: str, seed: int = 0, mode: int = 1,
                      k_max: int = 8) -> Field:
    """Unit-norm perturbation direction of the requested kind.

    random-smooth: complex Gaussian coefficients on the modes |k| <= k_max.
    mode-k: the single Fourier mode k = ``mode``.
    scaling: the L2-preserving dilation generator x f' + f / 2.
    """
    grid = f.grid
    k = np.rint(grid.eta * grid.L_box / np.pi).astype(int)
    if kind == "random-smooth":
        rng = np.random.default_rng(seed)
        s = np.where(np.abs(k) <= k_max,
                     rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points), 0.0)
    elif kind == "mode-k":
        s = np.where(k == mode, 1.0 + 0j, 0.0)
    elif kind == "scaling":
        fx = from_spectrum(1j * grid.eta * f.spectrum(), grid).values
        s = Field(grid, grid.x * fx + 0.5 * f.values).spectrum()
    else:
        raise ValueError(f"perturbation kind must be one of {PERTURBATIONS}, got {kind!r}")
    w = _weights(f, norm)
    s = s / _xnorm(s, w, grid.dx)
    return from_spectrum(s, grid)


@dataclass
class StabilityReport:
    delta: float
    times: np.ndarray
    distance: np.ndarray
    max_distance: float
    verdict: str
    norm: str
    kind: str
    K_stab: float
    termination: str = "completed"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta, "max_distance": self.max_distance, "verdict": self.verdict,
            "norm": self.norm, "kind": self.kind, "K_stab": self.K_stab,
            "termination": self.termination, "initial_distance": float(self.distance[0]),
            **self.params,
        }


def stability_experiment(ctx: NonlocalContext, f_star: GroundStateResult, delta: float,
                         kind: str = "random-smooth", T: float = 10.0, dt: float = 1e-3,
                         K_stab: float = 50.0, seed: int = 0, stride: int = 10,
                         mode: int = 1, integrator: str = "interaction-rk4") -> StabilityReport:
    """Evolve a perturbed ground state and track its orbit distance.

    The perturbed datum is renormalized back to mass lambda. The verdict is
    'stable-within-tolerance' iff max_t d(t) <= K_stab * delta.
    """
    if not f_star.converged:
        raise ValueError("stability experiments need a converged ground state")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    norm = "H1" if ctx.d_av > 0 else "L2"
    f = f_star.minimizer
    if delta > 0:
        g = make_perturbation(f, kind, norm, seed=seed, mode=mode)
        u0 = f + delta * g
        u0 = u0 * math.sqrt(f_star.lam / (f.grid.dx * float(np.sum(np.abs(u0.values) ** 2))))
    else:
        u0 = f
    cfg = EvolutionConfig(dt=dt, t_end=T, integrator=integrator, stride=stride)
    traj = evolve(ctx, cfg, u0, observer=lambda t, u: orbit_distance(u, f, norm)[0])
    d = np.array(traj.observed)
    dmax = float(d.max())
    ok = traj.termination == "completed" and dmax <= K_stab * max(delta, 1e-300)
    if delta == 0:
        ok = traj.termination == "completed"
    verdict = "stable-within-tolerance" if ok else "excursion"
    return StabilityReport(delta, traj.times, d, dmax, verdict, norm, kind, K_stab, traj.termination,
                           {"T": T, "dt": dt, "seed": seed, "lambda": f_star.lam})
