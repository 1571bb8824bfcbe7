"""Time integration of i u_t + d_av u_xx + Q(u) = 0.

The integrators work with the twisted variable v(t) = exp(-i t d_av d_x^2) u(t),
which satisfies

    v'(t) = i exp(-i t d_av d_x^2) Q(exp(i t d_av d_x^2) v(t)),

so the stiff linear part is handled exactly. The twist is folded into the
quadrature nodes of Q (T_r T^lin_t = T_{r + d_av t}), so a twisted evaluation
costs the same as a plain one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dmnls.grid import Field, from_spectrum, norm_l2
from dmnls.operators import NonlocalContext
from dmnls.variational import energy_spectrum

log = logging.getLogger(__name__)

INTEGRATORS = ("interaction-rk4", "strang")


class NonContractionError(RuntimeError):
    """Picard iteration failed to contract; retry with a smaller t_target."""


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "interaction-rk4"
    stride: int = 10
    blowup_threshold: float | None = None
    blowup_factor: float = 1e6
    snapshot_stride: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"stride must be an integer >= 1, got {self.stride}")
        if self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be >= 0")

    def threshold_for(self, h1_0: float) -> float:
        if self.blowup_threshold is not None:
            if not self.blowup_threshold > h1_0:
                raise ValueError("blowup_threshold must exceed the initial H1 norm")
            return float(self.blowup_threshold)
        return self.blowup_factor * max(h1_0, 1.0)


@dataclass
class Trajectory:
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    h1: np.ndarray
    final: Field
    termination: str = "completed"
    snapshots: list[tuple[float, Field]] = field(default_factory=list)
    observed: list = field(default_factory=list)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0]) if self.mass[0] else 0.0

    def energy_drift(self) -> float:
        scale = abs(self.energy[0]) or 1.0
        return float(np.max(np.abs(self.energy - self.energy[0])) / scale)


def _twisted_spec(ctx: NonlocalContext, t: float, s: np.ndarray) -> np.ndarray:
    return 1j * ctx.Q_spectrum(s, shift_r=ctx.d_av * t)


def rhs_twisted(ctx: NonlocalContext, t: float, v: Field) -> Field:
    """i T^lin_{-t} Q(T^lin_t v), with T^lin_t = exp(i t d_av d_x^2)."""
    return from_spectrum(_twisted_spec(ctx, t, v.spectrum()), v.grid)


def _lin(ctx: NonlocalContext, tau: float, s: np.ndarray) -> np.ndarray:
    if ctx.d_av == 0.0 or tau == 0.0:
        return s
    return np.exp(-1j * ctx.d_av * tau * ctx.grid.eta2) * s


def _step_ip_rk4(ctx, h, s):
    k1 = _twisted_spec(ctx, 0.0, s)
    k2 = _twisted_spec(ctx, 0.5 * h, s + 0.5 * h * k1)
    k3 = _twisted_spec(ctx, 0.5 * h, s + 0.5 * h * k2)
    k4 = _twisted_spec(ctx, h, s + h * k3)
    v = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _lin(ctx, h, v)


def _step_strang(ctx, h, s):
    s = _lin(ctx, 0.5 * h, s)
    k1 = 1j * ctx.Q_spectrum(s)
    k2 = 1j * ctx.Q_spectrum(s + 0.5 * h * k1)
    k3 = 1j * ctx.Q_spectrum(s + 0.5 * h * k2)
    k4 = 1j * ctx.Q_spectrum(s + h * k3)
    s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _lin(ctx, 0.5 * h, s)


_STEPPERS = {"interaction-rk4": _step_ip_rk4, "strang": _step_strang}


def step(ctx: NonlocalContext, config: EvolutionConfig, t: float, u: Field, dt: float | None = None) -> Field:
    """Advance u by one step. The equation is autonomous, so t is unused."""
    h = config.dt if dt is None else dt
    return from_spectrum(_STEPPERS[config.integrator](ctx, h, u.spectrum()), u.grid)


def _observables(ctx, s):
    dx = ctx.grid.dx
    a2 = np.abs(s) ** 2
    mass = dx * float(np.sum(a2))
    h1 = math.sqrt(dx * float(np.sum((1.0 + ctx.grid.eta2) * a2)))
    return mass, energy_spectrum(ctx, s), h1


def evolve(ctx: NonlocalContext, config: EvolutionConfig, u0: Field,
           observer: Callable[[float, Field], object] | None = None) -> Trajectory:
    """Fixed-step integration from t = 0 to config.t_end.

    Mass, energy and H1 norm are recorded every ``stride`` steps and at the
    final time. ``observer(t, u)`` is called at the same instants and its
    return values are collected in ``Trajectory.observed``. The run stops
    early (partial trajectory) when the H1 norm exceeds the blow-up threshold
    or the field stops being finite.
    """
    ctx._check(u0)
    stepper = _STEPPERS[config.integrator]
    s = u0.spectrum().copy()
    n_steps = max(0, math.ceil(config.t_end / config.dt - 1e-9))
    m0, e0, h0 = _observables(ctx, s)
    threshold = config.threshold_for(h0)
    times, mass, en, h1 = [0.0], [m0], [e0], [h0]
    snaps: list[tuple[float, Field]] = []
    observed = []
    if config.snapshot_stride:
        snaps.append((0.0, u0))
    if observer is not None:
        observed.append(observer(0.0, u0))
    reason = "completed"
    t = 0.0
    for n in range(1, n_steps + 1):
        h = config.dt if n < n_steps else config.t_end - (n_steps - 1) * config.dt
        s = stepper(ctx, h, s)
        t = config.t_end if n == n_steps else n * config.dt
        a2 = np.abs(s) ** 2
        if not np.all(np.isfinite(a2)):
            reason = "nan"
            break
        h1_now = math.sqrt(ctx.grid.dx * float(np.sum((1.0 + ctx.grid.eta2) * a2)))
        last = n == n_steps
        if h1_now > threshold:
            reason = "blowup-threshold"
        record = n % config.stride == 0 or last or reason != "completed"
        snap = bool(config.snapshot_stride) and (n % config.snapshot_stride == 0 or last)
        if record or snap:
            u = from_spectrum(s, ctx.grid)
        if record:
            mo, eo, ho = _observables(ctx, s)
            times.append(t)
            mass.append(mo)
            en.append(eo)
            h1.append(ho)
            if observer is not None:
                observed.append(observer(t, u))
        if snap:
            snaps.append((t, u))
        if reason != "completed":
            break
    if reason == "nan":
        final = from_spectrum(np.where(np.isfinite(s), s, np.nan), ctx.grid)
        log.warning("evolution produced non-finite values at t=%g", t)
    else:
        final = from_spectrum(s, ctx.grid)
    return Trajectory(np.array(times), np.array(mass), np.array(en), np.array(h1), final,
                      reason, snaps, observed)


def _cheb_integration(n: int):
    """Chebyshev-Lobatto nodes on [0, 1] and the matrix S with
    (S y)_j ≈ ∫_0^{tau_j} y(s) ds for the interpolant of y."""
    x = -np.cos(np.pi * np.arange(n) / (n - 1))
    V = np.polynomial.chebyshev.chebvander(x, n - 1)
    A = np.empty((n, n))
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        ci = np.polynomial.chebyshev.chebint(c, lbnd=-1.0)
        A[:, k] = np.polynomial.chebyshev.chebval(x, ci)
    S = 0.5 * A @ np.linalg.inv(V)
    return 0.5 * (x + 1.0), S


@dataclass
class PicardResult:
    field: Field
    iterations: int
    distances: list[float]

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0]

    @property
    def contraction_ratio(self) -> float:
        """Ratio of the last two successive-iterate distances (0 if exact)."""
        r = self.ratios
        return r[-1] if r else 0.0


def picard_solve(ctx: NonlocalContext, u0: Field, t_target: float, n_time_nodes: int = 16,
                 tol: float = 1e-12, max_iter: int = 200) -> PicardResult:
    """Fixed-point iteration of the Duhamel map at Chebyshev collocation times.

    Iterates v^{k+1}(tau_j) = u0 + ∫_0^{tau_j} F(s, v^k(s)) ds in the twisted
    variable, with the time integral taken spectrally on n_time_nodes
    Chebyshev-Lobatto points of [0, t_target].
    """
    ctx._check(u0)
    if t_target <= 0:
        raise ValueError("t_target must be positive")
    if n_time_nodes < 2:
        raise ValueError("n_time_nodes must be >= 2")
    tau01, S = _cheb_integration(n_time_nodes)
    tau = t_target * tau01
    S = t_target * S
    s0 = u0.spectrum()
    dx = ctx.grid.dx
    V = np.tile(s0, (n_time_nodes, 1))
    dists: list[float] = []
    for it in range(1, max_iter + 1):
        F = np.stack([_twisted_spec(ctx, tj, V[j]) for j, tj in enumerate(tau)])
        V_new = s0[None, :] + S @ F
        with np.errstate(over="ignore", invalid="ignore"):
            dist = math.sqrt(dx * float(np.max(np.sum(np.abs(V_new - V) ** 2, axis=1))))
        V = V_new
        dists.append(dist)
        if not math.isfinite(dist):
            raise NonContractionError(
                f"Picard iteration diverged at iteration {it}; retry with a smaller t_target")
        log.debug("picard iteration %d: distance %.3e", it, dist)
        if dist < tol:
            u = from_spectrum(_lin(ctx, t_target, V[-1]), ctx.grid)
            return PicardResult(u, it, dists)
    ratio = dists[-1] / dists[-2] if len(dists) > 1 and dists[-2] > 0 else float("nan")
    raise NonContractionError(
        f"no contraction to tol={tol:g} after {max_iter} iterations (last distance ratio "
        f"{ratio:.3g}); retry with a smaller t_target, e.g. {t_target / 2:g}")


@dataclass
class DivergenceSeries:
    times: np.ndarray
    ratio: np.ndarray
    rate: float
    intercept: float
    residual: float
    termination: str = "completed"


def gronwall_divergence_test(ctx: NonlocalContext, u0: Field, v0: Field, T: float,
                             dt: float = 1e-3, stride: int = 10,
                             integrator: str = "interaction-rk4") -> DivergenceSeries:
    """Series of ||u(t) - v(t)|| / ||u0 - v0|| with a least-squares fit
    log(ratio) ≈ intercept + rate * t."""
    d0 = norm_l2(u0 - v0)
    if d0 == 0.0:
        raise ValueError("u0 and v0 must differ")
    cfg = EvolutionConfig(dt=dt, t_end=T, integrator=integrator, stride=stride)
    tu = evolve(ctx, cfg, u0, observer=lambda t, u: u)
    tv = evolve(ctx, cfg, v0, observer=lambda t, u: u)
    n = min(len(tu.observed), len(tv.observed))
    ratio = np.array([norm_l2(tu.observed[k] - tv.observed[k]) / d0 for k in range(n)])
    times = tu.times[:n]
    reason = tu.termination if tu.termination != "completed" else tv.termination
    y = np.log(ratio)
    if n >= 2:
        A = np.vstack([np.ones(n), times]).T
        (c0, c1), *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = float(np.sqrt(np.mean((A @ np.array([c0, c1]) - y) ** 2)))
    else:
        c0, c1, resid = float(y[0]), 0.0, 0.0
    return DivergenceSeries(times, ratio, float(c1), float(c0), resid, reason)
