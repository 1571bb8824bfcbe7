"""Gauge-invariant nonlinearities P(z) = h(|z|) z and their potentials V.

V(a) = ∫_0^a h(s) s ds. Builtins carry closed forms; the oscillating and
custom families get V from adaptive quadrature, tabulated on a log grid and
interpolated with cubic Hermite pieces whose slopes are the exact V' = h(a) a.

The auditors check assumptions on h on a finite log-uniform sample. A pass
is a sample-based certificate, never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from dmnls.grid import Field

CLASS_TAGS = ("kerr", "power", "saturating", "oscillating", "custom")
ASSUMPTIONS = ("A1", "A2", "A3", "A4", "A5", "A6")


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """Scalar profile h with derivative, antiderivative V and growth exponent.

    ``h_sq`` optionally gives h as a function of a**2; it lets the Kerr and
    power families skip the square root in the hot loop.
    """

    h: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray] | None
    V: Callable[[np.ndarray], np.ndarray]
    p: float
    class_tag: str
    params: dict = field(default_factory=dict)
    h_sq: Callable[[np.ndarray], np.ndarray] | None = None
    V_sq: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise ValueError(f"unknown class tag {self.class_tag!r}")
        if not 0.0 <= self.p <= 4.0:
            raise ValueError(f"growth exponent p must lie in [0, 4], got {self.p}")

    @property
    def name(self) -> str:
        return self.class_tag

    def P(self, z: np.ndarray) -> np.ndarray:
        """Pointwise h(|z|) z; P(0) = 0 for any h finite at 0."""
        if self.h_sq is not None:
            a2 = z.real**2 + z.imag**2
            return self.h_sq(a2) * z
        return self.h(np.abs(z)) * z

    def V_of(self, z: np.ndarray) -> np.ndarray:
        if self.V_sq is not None:
            return self.V_sq(z.real**2 + z.imag**2)
        return self.V(np.abs(z))

    def to_dict(self) -> dict:
        return {"kind": self.class_tag, **self.params}

    @classmethod
    def custom(cls, h, V=None, h_prime=None, p: float = 0.0, a_max: float = 1e3) -> "NonlinearitySpec":
        """Wrap a user profile; V is tabulated by quadrature when not supplied."""
        hv = _vectorize(h)
        if V is None:
            V = TabulatedPotential(hv, a_max=a_max)
        return cls(h=hv, h_prime=None if h_prime is None else _vectorize(h_prime),
                   V=_vectorize(V), p=float(p), class_tag="custom")


def _vectorize(fn):
    def wrapped(a):
        a = np.asarray(a, dtype=float)
        out = fn(a)
        out = np.asarray(out, dtype=float)
        if out.shape != a.shape:
            out = np.broadcast_to(out, a.shape).copy()
        return out

    return wrapped


class TabulatedPotential:
    """V(a) = ∫_0^a h(s) s ds, tabulated once on a log grid.

    Each panel integral is done by adaptive Gauss-Kronrod quadrature; values
    between nodes use cubic Hermite interpolation with the exact slope h(a) a.
    Below ``a_min`` the contribution is taken as zero (|V(a_min)| is bounded by
    max|h| * a_min**2 / 2); beyond ``a_max`` V is integrated directly.
    """

    def __init__(self, h, a_min: float = 1e-6, a_max: float = 1e3, n_nodes: int = 4001,
                 epsabs: float = 1e-13):
        self._h = h
        self.a_min = a_min
        self.a_max = a_max
        self.epsabs = epsabs
        nodes = np.concatenate([[0.0], np.geomspace(a_min, a_max, n_nodes)])
        panels = np.zeros(len(nodes))
        for i in range(1, len(nodes)):
            lo, hi = nodes[i - 1], nodes[i]
            if i == 1:
                continue
            val, _ = integrate.quad(lambda s: float(h(np.asarray(s))) * s, lo, hi,
                                    epsabs=epsabs, epsrel=1e-12, limit=200)
            panels[i] = val
        values = np.cumsum(panels)
        slopes = h(nodes) * nodes
        self.nodes = nodes
        self.values = values
        self._spline = CubicHermiteSpline(nodes, values, slopes)

    def __call__(self, a):
        a_in = np.asarray(a, dtype=float)
        a = np.atleast_1d(a_in)
        out = np.empty_like(a)
        inside = a <= self.a_max
        out[inside] = self._spline(np.clip(a[inside], 0.0, None))
        out[a <= self.a_min] = 0.0
        for idx in zip(*np.nonzero(~inside)):
            extra, _ = integrate.quad(lambda s: float(self._h(np.asarray(s))) * s,
                                      self.a_max, float(a[idx]), epsabs=self.epsabs, limit=400)
            out[idx] = self.values[-1] + extra
        return out.reshape(a_in.shape)


def builtin(name: str, **params) -> NonlinearitySpec:
    """Construct one of the builtin families.

    kerr: h = a^2. power(p): h = a^p, 0 < p <= 4. saturating: h = a^2/(1+a^2).
    oscillating(delta, kappa): h = a^delta sin(a^-kappa), 0 < kappa < delta.
    """
    if name == "kerr":
        if params:
            raise ValueError(f"kerr takes no parameters, got {sorted(params)}")
        return NonlinearitySpec(
            h=lambda a: np.asarray(a, float) ** 2,
            h_prime=lambda a: 2.0 * np.asarray(a, float),
            V=lambda a: (np.asarray(a, float) ** 2) ** 2 / 4.0,
            p=2.0, class_tag="kerr",
            h_sq=lambda a2: a2,
            V_sq=lambda a2: a2 * a2 / 4.0,
        )
    if name == "power":
        _only(params, {"p"}, name)
        if "p" not in params:
            raise ValueError("power nonlinearity needs p")
        p = float(params["p"])
        if not 0.0 < p <= 4.0:
            raise ValueError(f"power exponent must satisfy 0 < p <= 4, got {p}")
        return NonlinearitySpec(
            h=lambda a: np.asarray(a, float) ** p,
            h_prime=lambda a: p * np.asarray(a, float) ** (p - 1.0),
            V=lambda a: np.asarray(a, float) ** (p + 2.0) / (p + 2.0),
            p=p, class_tag="power", params={"p": p},
            h_sq=lambda a2: a2 ** (p / 2.0),
            V_sq=lambda a2: a2 ** (p / 2.0 + 1.0) / (p + 2.0),
        )
    if name == "saturating":
        if params:
            raise ValueError(f"saturating takes no parameters, got {sorted(params)}")
        return NonlinearitySpec(
            h=lambda a: np.asarray(a, float) ** 2 / (1.0 + np.asarray(a, float) ** 2),
            h_prime=lambda a: 2.0 * np.asarray(a, float) / (1.0 + np.asarray(a, float) ** 2) ** 2,
            V=lambda a: 0.5 * (np.asarray(a, float) ** 2 - np.log1p(np.asarray(a, float) ** 2)),
            p=0.0, class_tag="saturating",
            h_sq=lambda a2: a2 / (1.0 + a2),
            V_sq=lambda a2: 0.5 * (a2 - np.log1p(a2)),
        )
    if name == "oscillating":
        _only(params, {"delta", "kappa", "p"}, name)
        try:
            delta = float(params["delta"])
            kappa = float(params["kappa"])
        except KeyError as exc:
            raise ValueError(f"oscillating nonlinearity needs {exc.args[0]}") from None
        if not 0.0 < kappa < delta:
            raise ValueError(f"oscillating needs 0 < kappa < delta, got kappa={kappa}, delta={delta}")
        p = float(params.get("p", min(delta, 4.0)))
        h = _oscillating_h(delta, kappa)
        return NonlinearitySpec(
            h=h, h_prime=_oscillating_h_prime(delta, kappa), V=TabulatedPotential(h),
            p=p, class_tag="oscillating", params={"delta": delta, "kappa": kappa, "p": p},
        )
    raise ValueError(f"unknown nonlinearity {name!r}")


def _only(params, allowed, name):
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"{name} got unexpected parameters {sorted(extra)}")


def _oscillating_h(delta, kappa):
    def h(a):
        a = np.asarray(a, dtype=float)
        out = np.zeros_like(a)
        pos = a > 0
        ap = a[pos]
        out[pos] = ap**delta * np.sin(ap ** (-kappa))
        return out

    return h


def _oscillating_h_prime(delta, kappa):
    def hp(a):
        a = np.asarray(a, dtype=float)
        s = a ** (-kappa)
        return delta * a ** (delta - 1.0) * np.sin(s) - kappa * a ** (delta - kappa - 1.0) * np.cos(s)

    return hp


def apply_P(spec: NonlinearitySpec, f: Field) -> Field:
    return Field(f.grid, spec.P(f.values))


def eval_V_integral(spec: NonlinearitySpec, f: Field) -> float:
    """dx * sum_j V(|f_j|)."""
    return float(f.grid.dx * np.sum(spec.V_of(f.values)))


@dataclass
class AssumptionReport:
    assumption: str
    passed: bool
    worst_point: float
    worst_ratio: float
    sample_grid: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "pass": bool(self.passed),
            "worst_point": float(self.worst_point),
            "worst_ratio": float(self.worst_ratio),
            "sample_grid": self.sample_grid,
            "details": self.details,
            "note": "sample-based certificate, not a proof",
        }


def _h_prime(spec: NonlinearitySpec, a: np.ndarray) -> np.ndarray:
    if spec.h_prime is not None:
        return spec.h_prime(a)
    step = 1e-6 * a
    return (spec.h(a + step) - spec.h(a - step)) / (2.0 * step)


def audit_assumption(spec: NonlinearitySpec, assumption: str, a_range=(1e-6, 1e3),
                     n_samples: int = 2000, *, p: float | None = None, p0: float | None = None,
                     p_fn: Callable | None = None, constant_cap: float = 100.0,
                     d_av_sign: int = 1) -> AssumptionReport:
    """Sample-based check of one assumption on h.

    A1 reports sup |h|/(1+a^p) and sup |h'|/(a^-1 + a^(p-1)) and passes when
    both are finite and below ``constant_cap`` (the implied constant), and
    |h'(a) a| < 1e-2 over the lowest sampled decade. A2 checks local
    boundedness of |h| and |h'|/(1+a^-1). A3 builds the smallest increasing
    majorant J of h/(1+a^p) and checks J(a)/a^4 drops at least twofold over
    the last decade. A4/A5 check h a^2 >= p0 V (resp. p(a) V); the reported ratio is
    min h a^2 / V over samples with V > 0. A6 looks for a sample with h > 0.
    """
    assumption = assumption.upper()
    if assumption not in ASSUMPTIONS:
        raise ValueError(f"unknown assumption {assumption!r}")
    a_lo, a_hi = map(float, a_range)
    if not (0.0 < a_lo < a_hi) or not math.isfinite(a_hi):
        raise ValueError(f"empty or invalid sample range {a_range}")
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    a = np.geomspace(a_lo, a_hi, n_samples)
    desc = f"log-uniform, {n_samples} samples on [{a_lo:g}, {a_hi:g}]"
    h = spec.h(a)
    pp = spec.p if p is None else float(p)

    if assumption == "A1":
        r1 = np.abs(h) / (1.0 + a**pp)
        hp = _h_prime(spec, a)
        r2 = np.abs(hp) / (a**-1.0 + a ** (pp - 1.0))
        ratio = np.maximum(r1, r2)
        i = int(np.argmax(ratio))
        low = np.abs(hp * a)[a <= a_lo * 10.0]
        limit_ok = bool(low.max() < 1e-2)
        ok = bool(np.all(np.isfinite(ratio)) and ratio[i] <= constant_cap and limit_ok)
        return AssumptionReport("A1", ok, a[i], ratio[i], desc, {
            "sup_h_ratio": float(r1.max()), "sup_hprime_ratio": float(r2.max()),
            "sup_hprime_a_lowest_decade": float(low.max()), "p": pp, "constant_cap": constant_cap})

    if assumption == "A2":
        near = a <= 1.0
        hp = _h_prime(spec, a)
        r = np.abs(hp) / (1.0 + 1.0 / a)
        cand = np.where(near, r, 0.0)
        i = int(np.argmax(cand))
        ok = bool(np.all(np.isfinite(h)) and np.all(np.isfinite(r)))
        return AssumptionReport("A2", ok, a[i], cand[i], desc,
                                {"sup_abs_h": float(np.abs(h).max())})

    if assumption == "A3":
        sh = -h if d_av_sign < 0 else h
        J = np.maximum.accumulate(np.maximum(sh, 0.0) / (1.0 + a**pp))
        growth = J / a**4
        tail = a >= a_hi / 10.0
        ok = bool(np.all(np.isfinite(J)) and growth[-1] <= 0.5 * growth[tail][0])
        return AssumptionReport("A3", ok, a[-1], growth[-1], desc, {"J_at_max": float(J[-1]), "p": pp})

    if assumption in ("A4", "A5"):
        V = spec.V(a)
        lhs = h * a**2
        if assumption == "A4":
            if p0 is None or p0 <= 2.0:
                raise ValueError("A4 needs p0 > 2")
            pa = np.full_like(a, float(p0))
            extra = {"p0": float(p0)}
        else:
            if p_fn is None:
                raise ValueError("A5 needs a decreasing function p(a) > 2")
            pa = np.asarray(p_fn(a), dtype=float) * np.ones_like(a)
            extra = {"p_decreasing": bool(np.all(np.diff(pa) <= 0)), "p_above_2": bool(np.all(pa > 2))}
        pos = V > 0
        ratio = np.where(pos, lhs / np.where(pos, V, 1.0), np.inf)
        i = int(np.argmin(ratio))
        slack = 1e-12 * np.abs(lhs)
        holds = bool(np.all(lhs - pa * V >= -slack))
        ok = holds and extra.get("p_decreasing", True) and extra.get("p_above_2", True)
        return AssumptionReport(assumption, ok, a[i], float(ratio[i]), desc, extra)

    pos = np.nonzero(h > 0)[0]
    if pos.size:
        i = int(pos[np.argmax(h[pos])])
        return AssumptionReport("A6", True, a[i], float(h[i]), desc)
    return AssumptionReport("A6", False, a[int(np.argmax(h))], float(h.max()), desc)
