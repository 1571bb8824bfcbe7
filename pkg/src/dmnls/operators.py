"""Free propagator T_r, the averaged nonlinearity Q and the potential N.

    T_r f  = F^{-1}[exp(-i r eta^2) F f]
    Q(f)   = sum_i w_i T_{-r_i} P(T_{r_i} f)
    N(f)   = sum_i w_i ∫ V(|T_{r_i} f|) dx

Q and N share the same node set, so Q is exactly the L2 gradient of N on the
discrete level. All node contributions are evaluated as one batched
transform of shape (n_nodes, n_points); the reduction over nodes is a fixed
ordered sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dmnls.dispersion import PsiMeasure, quadrature
from dmnls.grid import Field, Grid, GridMismatchError, fft, from_spectrum, ifft, norm_l2
from dmnls.nonlinearity import NonlinearitySpec


def free_propagate(f: Field, r: float) -> Field:
    """T_r f = exp(i r d_x^2) f, exactly unitary."""
    return from_spectrum(np.exp(-1j * r * f.grid.eta2) * f.spectrum(), f.grid)


@dataclass(frozen=True, eq=False)
class NonlocalContext:
    grid: Grid
    nonlinearity: NonlinearitySpec
    nodes: np.ndarray
    weights: np.ndarray
    d_av: float = 0.0
    dealias: bool = False
    _phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float)).copy()
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("nodes and weights must be 1-D arrays of equal, nonzero length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"quadrature weights must sum to 1, got {weights.sum()!r}")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "d_av", float(self.d_av))
        object.__setattr__(self, "dealias", bool(self.dealias))
        phase = np.exp(-1j * np.outer(nodes, self.grid.eta2))
        phase.flags.writeable = False
        object.__setattr__(self, "_phase", phase)

    @classmethod
    def from_psi(cls, grid: Grid, nonlinearity: NonlinearitySpec, psi: PsiMeasure,
                 d_av: float = 0.0, rule: str = "gauss-legendre-per-piece",
                 nodes_per_piece: int = 32, dealias: bool | None = None) -> "NonlocalContext":
        """Context from a density; dealiasing defaults to on for Kerr only."""
        nodes, weights = quadrature(psi, nodes_per_piece, rule)
        if dealias is None:
            dealias = nonlinearity.class_tag == "kerr"
        return cls(grid, nonlinearity, nodes, weights, d_av, dealias)

    @classmethod
    def local(cls, grid: Grid, nonlinearity: NonlinearitySpec, d_av: float = 0.0,
              dealias: bool = False) -> "NonlocalContext":
        """Degenerate psi = delta_0: Q reduces to the pointwise P."""
        return cls(grid, nonlinearity, np.array([0.0]), np.array([1.0]), d_av, dealias)

    def replace(self, **changes) -> "NonlocalContext":
        kw = dict(grid=self.grid, nonlinearity=self.nonlinearity, nodes=self.nodes,
                  weights=self.weights, d_av=self.d_av, dealias=self.dealias)
        kw.update(changes)
        return NonlocalContext(**kw)

    def _check(self, f: Field):
        if f.grid != self.grid:
            raise GridMismatchError("field grid differs from context grid")

    def Q_spectrum(self, s: np.ndarray, shift_r: float = 0.0) -> np.ndarray:
        """Spectrum of Q applied to the field with spectrum ``s``.

        ``shift_r`` adds a common offset to every node; the time integrator
        uses it to fold the linear flow exp(i t d_av d_x^2) into the nodes.
        """
        phase = self._phase
        twist = None
        if shift_r != 0.0:
            # T_{r+c} = T_r T_c: twist once on the vector, not per node
            twist = np.exp(-1j * shift_r * self.grid.eta2)
            s = twist * s
        w = ifft(phase * s)
        pw = fft(self.nonlinearity.P(w))
        out = np.einsum("i,ij->j", self.weights, np.conj(phase) * pw)
        if twist is not None:
            out = np.conj(twist) * out
        if self.dealias:
            out = out * self.grid.dealias_mask
        return out

    def N_spectrum(self, s: np.ndarray) -> float:
        w = ifft(self._phase * s)
        per_node = self.nonlinearity.V_of(w).sum(axis=1)
        return float(self.grid.dx * np.dot(self.weights, per_node))


def apply_Q(ctx: NonlocalContext, f: Field) -> Field:
    ctx._check(f)
    return from_spectrum(ctx.Q_spectrum(f.spectrum()), f.grid)


def nonlocal_N(ctx: NonlocalContext, f: Field) -> float:
    ctx._check(f)
    return ctx.N_spectrum(f.spectrum())


def _random_envelope_field(grid: Grid, rng: np.random.Generator) -> Field:
    amp = np.exp(rng.uniform(np.log(0.1), np.log(3.0)))
    width = rng.uniform(0.5, 3.0)
    center = rng.uniform(-0.2, 0.2) * grid.L_box
    x = grid.x
    env = amp * np.exp(-((x - center) ** 2) / (2 * width**2))
    k = rng.uniform(-2.0, 2.0)
    phase = rng.uniform(0, 2 * np.pi)
    return Field(grid, env * np.exp(1j * (k * x + phase)))


@dataclass
class QBoundReport:
    ensemble_size: int
    bound_ratio: float
    lipschitz_ratio: float
    skipped_pairs: int
    pointwise_bound_ok: bool | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def audit_q_bounds(ctx: NonlocalContext, ensemble_size: int = 50, seed: int = 0) -> QBoundReport:
    """Empirical sup of the L2 bound and L2 Lipschitz ratios of Q.

    Ratios: ||Q f|| / (||f|| + ||f||^{p+1}) and
    ||Q f - Q g|| / ((1 + ||f||^p + ||g||^p) ||f - g||), over random
    Gaussian-envelope fields. For the single node r = 0 with Kerr, also checks
    ||Q f - Q g|| <= 3 max(|f|_inf, |g|_inf)^2 ||f - g||.
    """
    if ensemble_size < 50:
        raise ValueError("ensemble_size must be >= 50")
    rng = np.random.default_rng(seed)
    p = ctx.nonlinearity.p
    b_max = 0.0
    l_max = 0.0
    skipped = 0
    pointwise = None
    local_kerr = (ctx.nodes.size == 1 and ctx.nodes[0] == 0.0
                  and ctx.nonlinearity.class_tag == "kerr" and not ctx.dealias)
    if local_kerr:
        pointwise = True
    for _ in range(ensemble_size):
        f = _random_envelope_field(ctx.grid, rng)
        g = _random_envelope_field(ctx.grid, rng) if rng.random() > 0.1 else f
        qf, qg = apply_Q(ctx, f), apply_Q(ctx, g)
        nf, ng = norm_l2(f), norm_l2(g)
        b_max = max(b_max, norm_l2(qf) / (nf + nf ** (p + 1)))
        dfg = norm_l2(f - g)
        if dfg == 0.0:
            skipped += 1
            continue
        dq = norm_l2(qf - qg)
        l_max = max(l_max, dq / ((1 + nf**p + ng**p) * dfg))
        if local_kerr:
            m = max(np.abs(f.values).max(), np.abs(g.values).max())
            pointwise = bool(pointwise and dq <= 3 * m**2 * dfg * (1 + 1e-12))
    return QBoundReport(ensemble_size, b_max, l_max, skipped, pointwise)
