"""Experiment configuration: TOML in, validated dataclasses out.

Schema (all keys optional; defaults shown)::

    d_av = 1.0                  # also accepted as profile.d_av
    seed = 0
    output_dir = "out"
    nonlinearity = { kind = "kerr" }          # kind, p, delta, kappa
    profile = { d_av = 1.0, segments = [[1.0, 1.0], [1.0, -1.0]] }
    # or: psi = { pieces = [[0.0, 1.0, 1.0]] }
    quadrature = { rule = "gauss-legendre", nodes_per_piece = 32 }

    [grid]        L_box = 20.0, n_points = 1024
    [initial]     kind = "gaussian", amplitude = 2.0, width = 1.0, center = 0.0
                  (or kind = "snapshot", path = "...")
    [evolution]   dt = 1e-3, t_end = 1.0, integrator = "interaction-rk4",
                  stride = 10, blowup_factor = 1e6, blowup_threshold,
                  snapshot_stride = 0, dealias = "auto"
    [groundstate] lambda = 8.0, tol = 1e-6, max_iter = 5000
    [stability]   delta = 1e-3, kind = "random-smooth", T = 10.0, dt = 1e-3,
                  K_stab = 50.0, mode = 1, stride = 10
    [audit]       assumptions = ["A1", "A4", "A6"], p0 = 4.0, p, a_min = 1e-6,
                  a_max = 1e3, n_samples = 2000, constant_cap = 100.0,
                  q_bounds_ensemble = 50

Unknown keys are rejected. Errors carry the dotted path of the offending key.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dmnls.dispersion import DispersionProfile, PsiMeasure, model_profile, psi_from_profile
from dmnls.evolution import INTEGRATORS, EvolutionConfig
from dmnls.grid import Grid
from dmnls.nonlinearity import ASSUMPTIONS, NonlinearitySpec, builtin
from dmnls.operators import NonlocalContext
from dmnls.stability import PERTURBATIONS


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class GridSection:
    L_box: float = 20.0
    n_points: int = 1024


@dataclass(frozen=True)
class NonlinearitySection:
    kind: str = "kerr"
    p: float | None = None
    delta: float | None = None
    kappa: float | None = None


@dataclass(frozen=True)
class ProfileSection:
    segments: tuple = ((1.0, 1.0), (1.0, -1.0))
    d_av: float | None = None


@dataclass(frozen=True)
class PsiSection:
    pieces: tuple = ()


@dataclass(frozen=True)
class QuadratureSection:
    rule: str = "gauss-legendre"
    nodes_per_piece: int = 32


@dataclass(frozen=True)
class InitialSection:
    kind: str = "gaussian"
    amplitude: float = 2.0
    width: float = 1.0
    center: float = 0.0
    path: str | None = None


@dataclass(frozen=True)
class EvolutionSection:
    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "interaction-rk4"
    stride: int = 10
    blowup_factor: float = 1e6
    blowup_threshold: float | None = None
    snapshot_stride: int = 0
    dealias: Any = "auto"


@dataclass(frozen=True)
class GroundstateSection:
    lam: float = 8.0
    tol: float = 1e-6
    max_iter: int = 5000


@dataclass(frozen=True)
class StabilitySection:
    delta: float = 1e-3
    kind: str = "random-smooth"
    T: float = 10.0
    dt: float = 1e-3
    K_stab: float = 50.0
    mode: int = 1
    stride: int = 10


@dataclass(frozen=True)
class AuditSection:
    assumptions: tuple = ("A1", "A4", "A6")
    p0: float = 4.0
    p: float | None = None
    a_min: float = 1e-6
    a_max: float = 1e3
    n_samples: int = 2000
    constant_cap: float = 100.0
    q_bounds_ensemble: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    d_av: float = 1.0
    seed: int = 0
    output_dir: str = "out"
    grid: GridSection = field(default_factory=GridSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    profile: ProfileSection | None = field(default_factory=ProfileSection)
    psi: PsiSection | None = None
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    initial: InitialSection = field(default_factory=InitialSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    groundstate: GroundstateSection = field(default_factory=GroundstateSection)
    stability: StabilitySection = field(default_factory=StabilitySection)
    audit: AuditSection = field(default_factory=AuditSection)

    # builders -----------------------------------------------------------
    def make_grid(self) -> Grid:
        return Grid(self.grid.L_box, self.grid.n_points)

    def make_nonlinearity(self) -> NonlinearitySpec:
        return _nonlinearity(self.nonlinearity, "nonlinearity")

    def make_psi(self) -> PsiMeasure:
        if self.psi is not None:
            return PsiMeasure.from_pieces(self.psi.pieces)
        prof = self.make_profile()
        return psi_from_profile(prof)

    def make_profile(self) -> DispersionProfile:
        if self.profile is None:
            return model_profile(self.d_av)
        return DispersionProfile(self.d_av, self.profile.segments)

    def dealias_flag(self) -> bool:
        d = self.evolution.dealias
        if d == "auto":
            return self.nonlinearity.kind == "kerr"
        return bool(d)

    def make_context(self, dealias: bool | None = None) -> NonlocalContext:
        return NonlocalContext.from_psi(
            self.make_grid(), self.make_nonlinearity(), self.make_psi(), d_av=self.d_av,
            rule=self.quadrature.rule, nodes_per_piece=self.quadrature.nodes_per_piece,
            dealias=self.dealias_flag() if dealias is None else dealias,
        )

    def make_evolution(self) -> EvolutionConfig:
        e = self.evolution
        return EvolutionConfig(dt=e.dt, t_end=e.t_end, integrator=e.integrator, stride=e.stride,
                               blowup_threshold=e.blowup_threshold, blowup_factor=e.blowup_factor,
                               snapshot_stride=e.snapshot_stride)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"d_av": self.d_av, "seed": self.seed, "output_dir": self.output_dir}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if dataclasses.is_dataclass(val):
                sec = {}
                for sf in dataclasses.fields(val):
                    v = getattr(val, sf.name)
                    if v is None:
                        continue
                    sec[_KEY_ALIASES.get(sf.name, sf.name)] = _plain(v)
                out[f.name] = sec
        return out

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_KEY_ALIASES = {"lam": "lambda"}
_KEY_ALIASES_INV = {v: k for k, v in _KEY_ALIASES.items()}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _nonlinearity(sec: NonlinearitySection, path: str) -> NonlinearitySpec:
    params = {k: getattr(sec, k) for k in ("p", "delta", "kappa") if getattr(sec, k) is not None}
    try:
        return builtin(sec.kind, **params)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


_SECTIONS = {
    "grid": GridSection, "nonlinearity": NonlinearitySection, "profile": ProfileSection,
    "psi": PsiSection, "quadrature": QuadratureSection, "initial": InitialSection,
    "evolution": EvolutionSection, "groundstate": GroundstateSection,
    "stability": StabilitySection, "audit": AuditSection,
}
_TOP = {"d_av": float, "seed": int, "output_dir": str}


def _coerce(value, default, path):
    """Coerce a raw TOML/JSON value against the type of the default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or default is None and isinstance(value, (int, float)) \
            and not isinstance(value, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ConfigError(path, f"expected a finite number, got {value!r}")
        return v
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(tuple(x) if isinstance(x, (list, tuple)) else x for x in value)
    return value


def _section(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a table, got {type(raw).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in raw.items():
        name = _KEY_ALIASES_INV.get(key, key)
        if name not in names:
            raise ConfigError(f"{path}.{key}", "unknown key")
        f = names[name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw[name] = value if f.type == "Any" else _coerce(value, default, f"{path}.{key}")
    return cls(**kw)


def from_mapping(raw: dict) -> ExperimentConfig:
    """Validate a parsed mapping (TOML or a JSON echo) into a config."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a table")
    kw: dict[str, Any] = {}
    for key, value in raw.items():
        if key in _TOP:
            kw[key] = _coerce(value, {"d_av": 0.0, "seed": 0, "output_dir": ""}[key], key)
        elif key in _SECTIONS:
            kw[key] = _section(_SECTIONS[key], value, key)
        else:
            raise ConfigError(key, "unknown key")
    if "psi" in kw and "profile" in kw:
        raise ConfigError("psi", "give either profile or psi, not both")
    if "psi" in kw:
        kw["profile"] = None
    prof = kw.get("profile")
    if prof is not None and prof.d_av is not None:
        if "d_av" in kw and kw["d_av"] != prof.d_av:
            raise ConfigError("profile.d_av", f"conflicts with d_av = {kw['d_av']}")
        kw["d_av"] = prof.d_av
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<root>", f"not valid TOML: {exc}") from None
    return from_mapping(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field and range checks; raises ConfigError with the key path."""
    try:
        cfg.make_grid()
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    cfg.make_nonlinearity()
    if cfg.psi is not None:
        if not cfg.psi.pieces:
            raise ConfigError("psi.pieces", "at least one piece required")
        for i, pc in enumerate(cfg.psi.pieces):
            if len(pc) != 3:
                raise ConfigError(f"psi.pieces[{i}]", "expected [r_lo, r_hi, density]")
        try:
            cfg.make_psi()
        except ValueError as exc:
            raise ConfigError("psi.pieces", str(exc)) from None
    else:
        for i, seg in enumerate(cfg.profile.segments):
            if len(seg) != 2:
                raise ConfigError(f"profile.segments[{i}]", "expected [tau, slope]")
        try:
            cfg.make_psi()
        except ValueError as exc:
            raise ConfigError("profile.segments", str(exc)) from None
    q = cfg.quadrature
    if q.rule not in ("gauss-legendre", "gauss-legendre-per-piece", "midpoint", "midpoint-per-piece"):
        raise ConfigError("quadrature.rule", f"unknown rule {q.rule!r}")
    if q.nodes_per_piece < 1:
        raise ConfigError("quadrature.nodes_per_piece", "must be >= 1")
    e = cfg.evolution
    if not e.dt > 0:
        raise ConfigError("evolution.dt", f"must be positive, got {e.dt}")
    if not e.t_end >= 0:
        raise ConfigError("evolution.t_end", f"must be >= 0, got {e.t_end}")
    if e.integrator not in INTEGRATORS:
        raise ConfigError("evolution.integrator", f"must be one of {INTEGRATORS}")
    if e.stride < 1:
        raise ConfigError("evolution.stride", "must be >= 1")
    if e.snapshot_stride < 0:
        raise ConfigError("evolution.snapshot_stride", "must be >= 0")
    if not e.blowup_factor > 1:
        raise ConfigError("evolution.blowup_factor", "must exceed 1")
    if e.dealias not in ("auto", True, False):
        raise ConfigError("evolution.dealias", "must be 'auto', true or false")
    i = cfg.initial
    if i.kind not in ("gaussian", "snapshot"):
        raise ConfigError("initial.kind", "must be 'gaussian' or 'snapshot'")
    if i.kind == "gaussian" and not i.width > 0:
        raise ConfigError("initial.width", "must be positive")
    if i.kind == "snapshot" and not i.path:
        raise ConfigError("initial.path", "required for kind = 'snapshot'")
    g = cfg.groundstate
    if not g.lam > 0:
        raise ConfigError("groundstate.lambda", "must be positive")
    if not g.tol > 0:
        raise ConfigError("groundstate.tol", "must be positive")
    if g.max_iter < 1:
        raise ConfigError("groundstate.max_iter", "must be >= 1")
    s = cfg.stability
    if s.kind not in PERTURBATIONS:
        raise ConfigError("stability.kind", f"must be one of {PERTURBATIONS}")
    if not s.delta >= 0:
        raise ConfigError("stability.delta", "must be >= 0")
    if not s.dt > 0:
        raise ConfigError("stability.dt", f"must be positive, got {s.dt}")
    if not s.T > 0:
        raise ConfigError("stability.T", "must be positive")
    if not s.K_stab > 0:
        raise ConfigError("stability.K_stab", "must be positive")
    if s.stride < 1:
        raise ConfigError("stability.stride", "must be >= 1")
    a = cfg.audit
    for k, name in enumerate(a.assumptions):
        if str(name).upper() not in ASSUMPTIONS:
            raise ConfigError(f"audit.assumptions[{k}]", f"unknown assumption {name!r}")
    if not 0 < a.a_min < a.a_max:
        raise ConfigError("audit.a_min", "need 0 < a_min < a_max")
    if a.n_samples < 100:
        raise ConfigError("audit.n_samples", "must be >= 100")
    if "A4" in [x.upper() for x in a.assumptions] and not a.p0 > 2:
        raise ConfigError("audit.p0", "A4 needs p0 > 2")
    if a.p is not None and not 0 <= a.p <= 4:
        raise ConfigError("audit.p", "A1 growth exponent must lie in [0, 4]")
    if a.q_bounds_ensemble < 50:
        raise ConfigError("audit.q_bounds_ensemble", "must be >= 50")
