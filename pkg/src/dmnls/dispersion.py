"""Dispersion density psi from a piecewise-constant periodic dispersion map.

The mean-zero part d_0 of the local dispersion is piecewise constant with
segments (tau_j, d_j). Its primitive D(t) is piecewise linear, and the
pushforward of the uniform measure on [0, L] under D has density

    psi = sum_j (tau_j / L) * (1 / |d_j tau_j|) * 1[D(t_j), D(t_{j+1})],

i.e. each segment contributes 1/(L |d_j|) on the interval it sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DispersionProfile:
    """Average dispersion plus the segments of the mean-zero periodic part."""

    d_av: float
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(t), float(d)) for t, d in self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        for tau, slope in segs:
            if not tau > 0:
                raise ValueError(f"segment durations must be positive, got {tau}")
            if slope == 0:
                raise ValueError("segment slopes must be nonzero (d_0 stays away from zero)")
        taus = np.array([t for t, _ in segs])
        slopes = np.array([d for _, d in segs])
        scale = float(np.sum(taus * np.abs(slopes)))
        if abs(float(np.sum(taus * slopes))) > 1e-12 * scale:
            raise ValueError(
                "segments violate the mean-zero invariant: sum(tau*slope) = "
                f"{float(np.sum(taus * slopes)):.3e}"
            )
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "d_av", float(self.d_av))

    @property
    def period(self) -> float:
        return float(sum(t for t, _ in self.segments))

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Segment start times t_j and the values D(t_j), both of length n+1."""
        taus = np.array([t for t, _ in self.segments])
        slopes = np.array([d for _, d in self.segments])
        t = np.concatenate([[0.0], np.cumsum(taus)])
        D = np.concatenate([[0.0], np.cumsum(taus * slopes)])
        D[-1] = 0.0
        return t, D

    def to_dict(self) -> dict:
        return {"d_av": self.d_av, "segments": [list(s) for s in self.segments]}


def model_profile(d_av: float = 0.0) -> DispersionProfile:
    """Two-step map d_0 = +1 on [0, 1], -1 on (1, 2)."""
    return DispersionProfile(d_av, ((1.0, 1.0), (1.0, -1.0)))


def cumulative_D(profile: DispersionProfile, t):
    """D(t) = ∫_0^t d_0(s) ds on one period."""
    t_arr = np.asarray(t, dtype=float)
    L = profile.period
    if np.any(t_arr < 0) or np.any(t_arr > L * (1 + 1e-15)):
        raise ValueError(f"t must lie in [0, {L}]")
    tb, Db = profile.breakpoints()
    out = np.interp(t_arr, tb, Db)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PsiMeasure:
    """Piecewise-constant probability density on a bounded set.

    ``pieces`` are disjoint, sorted (r_lo, r_hi, density) triples.
    """

    pieces: tuple[tuple[float, float, float], ...]
    _validate_mass: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        ps = tuple(sorted((float(a), float(b), float(c)) for a, b, c in self.pieces))
        if not ps:
            raise ValueError("empty measure")
        for lo, hi, dens in ps:
            if not hi > lo:
                raise ValueError(f"piece [{lo}, {hi}) has nonpositive length")
            if dens < 0 or not np.isfinite(dens):
                raise ValueError(f"piece density must be finite and >= 0, got {dens}")
        for (_, hi0, _), (lo1, _, _) in zip(ps, ps[1:]):
            if lo1 < hi0 - 1e-12 * max(1.0, abs(hi0)):
                raise ValueError("pieces overlap")
        object.__setattr__(self, "pieces", ps)
        if self._validate_mass and abs(self.total_mass - 1.0) > 1e-10:
            raise ValueError(f"psi must be a probability density, total mass {self.total_mass!r}")

    @classmethod
    def from_pieces(cls, pieces) -> "PsiMeasure":
        return cls(tuple(tuple(p) for p in pieces))

    @property
    def total_mass(self) -> float:
        return float(sum((hi - lo) * d for lo, hi, d in self.pieces))

    @property
    def support(self) -> tuple[float, float]:
        return self.pieces[0][0], self.pieces[-1][1]

    def density(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for lo, hi, d in self.pieces:
            out = np.where((r >= lo) & (r < hi), d, out)
        return out

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for lo, hi, d in self.pieces:
            out = out + d * np.clip(r - lo, 0.0, hi - lo)
        return out

    def moment(self, m: int) -> float:
        """Exact ∫ r^m psi(r) dr for the piecewise-constant density."""
        return float(sum(d * (hi ** (m + 1) - lo ** (m + 1)) / (m + 1) for lo, hi, d in self.pieces))

    def to_json(self) -> list[list[float]]:
        return [[lo, hi, d] for lo, hi, d in self.pieces]


def psi_from_profile(profile: DispersionProfile) -> PsiMeasure:
    """Exact pushforward density of uniform time under D."""
    L = profile.period
    _, Db = profile.breakpoints()
    contrib = []
    for j, (_, slope) in enumerate(profile.segments):
        lo, hi = sorted((Db[j], Db[j + 1]))
        contrib.append((lo, hi, 1.0 / (L * abs(slope))))
    return PsiMeasure(_merge(contrib))


def _merge(contrib) -> tuple[tuple[float, float, float], ...]:
    """Sum overlapping constant pieces on the sorted breakpoint set."""
    edges = np.unique(np.array([e for lo, hi, _ in contrib for e in (lo, hi)]))
    span = float(edges[-1] - edges[0]) or 1.0
    dens = np.zeros(len(edges) - 1)
    for lo, hi, d in contrib:
        i0 = int(np.searchsorted(edges, lo))
        i1 = int(np.searchsorted(edges, hi))
        dens[i0:i1] += d
    pieces: list[list[float]] = []
    for k in range(len(dens)):
        lo, hi, d = float(edges[k]), float(edges[k + 1]), float(dens[k])
        if d == 0.0:
            continue
        if hi - lo <= 1e-15 * span:
            # sliver from rounding of breakpoints; fold its mass into a neighbour
            if pieces and pieces[-1][1] == lo:
                pieces[-1][2] += d * (hi - lo) / (pieces[-1][1] - pieces[-1][0])
                pieces[-1][1] = hi
            continue
        if pieces and pieces[-1][1] == lo and abs(pieces[-1][2] - d) <= 1e-12 * max(d, pieces[-1][2]):
            pieces[-1][1] = hi
        else:
            pieces.append([lo, hi, d])
    return tuple(tuple(p) for p in pieces)


RULES = ("midpoint-per-piece", "gauss-legendre-per-piece")


def quadrature(psi: PsiMeasure, n_nodes: int, rule: str = "gauss-legendre-per-piece"):
    """Nodes and positive weights with sum(weights) == total mass.

    ``n_nodes`` is the count per piece.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if rule in ("gauss-legendre", "gauss-legendre-per-piece"):
        ref_x, ref_w = np.polynomial.legendre.leggauss(n_nodes)
        ref_x = 0.5 * (ref_x + 1.0)
        ref_w = 0.5 * ref_w
    elif rule in ("midpoint", "midpoint-per-piece"):
        ref_x = (np.arange(n_nodes) + 0.5) / n_nodes
        ref_w = np.full(n_nodes, 1.0 / n_nodes)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    nodes, weights = [], []
    for lo, hi, d in psi.pieces:
        if d == 0.0:
            continue
        nodes.append(lo + (hi - lo) * ref_x)
        weights.append(d * (hi - lo) * ref_w)
    if not nodes:
        raise ValueError("empty measure")
    return np.concatenate(nodes), np.concatenate(weights)


def lq_norm(psi: PsiMeasure, q: float) -> float:
    """Exact L^q norm of the density; q = inf gives the sup."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if np.isinf(q):
        return max(d for _, _, d in psi.pieces)
    return float(sum(d**q * (hi - lo) for lo, hi, d in psi.pieces) ** (1.0 / q))


lq_membership = lq_norm
