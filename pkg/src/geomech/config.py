"""Run configuration: JSON documents mapped onto dataclasses.

Unknown keys are rejected so that typos surface as validation errors. The
effective configuration (defaults filled in, command-line overrides
applied) round-trips through :func:`to_dict` / :func:`from_dict`.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Union

MODES = ("simulate", "reduce", "compare", "check", "aks")
DIAGNOSTICS = ("energy", "J", "lam_tr2", "lam_tr3")
SEED_ENV = "GEOMECH_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExprSystem:
    """A system written in the expression language; ``force`` holds one
    expression per coordinate (empty for unforced systems)."""

    dim: int
    lagrangian: str
    force: tuple = ()
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SymmetrySpec:
    generators: Optional[tuple] = None     # expression vectors, one per group direction
    structure: Optional[tuple] = None      # c[k][a][b]
    group_indices: Optional[tuple] = None  # 1-based cyclic coordinates
    connection: Optional[tuple] = None     # A[a][i] over the base coordinates
    mu: Optional[tuple] = None
    gyro_sign: float = 1.0


@dataclass(frozen=True)
class IntegrationSpec:
    t0: float = 0.0
    t1: Optional[float] = None
    dt: float = 1e-3


@dataclass(frozen=True)
class InitialCondition:
    q: Optional[tuple] = None
    v: Optional[tuple] = None


@dataclass(frozen=True)
class OutputSpec:
    csv: Optional[str] = None
    diagnostics: tuple = ("energy",)


@dataclass(frozen=True)
class Tolerances:
    noether: float = 1e-6
    base_deviation: float = 1e-5
    negative_control: float = 1e-1
    residual: float = 1e-5
    cartan: float = 1e-10
    routh: float = 1e-10
    invariance: float = 1e-6
    spectral: float = 1e-6
    reference: float = 1e-8
    unreduced: float = 1e-9
    momentum: float = 1e-8
    phi: float = 1e-4


@dataclass(frozen=True)
class AKSSpec:
    gauge: str = "lax"
    coupling: float = 0.25
    spread: float = 0.3
    reference_dt: Optional[float] = None
    phi_check: bool = False
    unreduced_check: bool = False


@dataclass(frozen=True)
class RunConfig:
    mode: str
    system: Union[str, ExprSystem]
    symmetry: SymmetrySpec = SymmetrySpec()
    integration: IntegrationSpec = IntegrationSpec()
    ic: InitialCondition = InitialCondition()
    outputs: OutputSpec = OutputSpec()
    tolerances: Tolerances = Tolerances()
    aks: AKSSpec = AKSSpec()
    negative_control: bool = False
    samples: int = 100
    seed: int = 0

    @property
    def label(self) -> str:
        return self.system if isinstance(self.system, str) else "expr"


_SECTIONS = {"symmetry": SymmetrySpec, "integration": IntegrationSpec, "ic": InitialCondition,
             "outputs": OutputSpec, "tolerances": Tolerances, "aks": AKSSpec}


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(y) for y in x)
    return x


def _listify(x):
    if isinstance(x, tuple):
        return [_listify(y) for y in x]
    if isinstance(x, dict):
        return {k: _listify(v) for k, v in x.items()}
    return x


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return cls(**{k: _tuplify(v) for k, v in data.items()})


def _system(data):
    if isinstance(data, str):
        return data
    if not isinstance(data, dict):
        raise ConfigError("'system' must be a builtin name or an object with dim and lagrangian")
    unknown = set(data) - {"dim", "lagrangian", "force", "params"}
    if unknown:
        raise ConfigError(f"unknown keys in 'system': {sorted(unknown)}")
    if "dim" not in data or "lagrangian" not in data:
        raise ConfigError("expression systems need 'dim' and 'lagrangian'")
    return ExprSystem(data["dim"], data["lagrangian"], _tuplify(data.get("force", [])),
                      dict(data.get("params", {})))


def from_dict(data: dict, mode: Optional[str] = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "system" not in data:
        raise ConfigError("missing 'system'")
    given = data.get("mode")
    if mode is not None and given is not None and given != mode:
        raise ConfigError(f"config mode {given!r} conflicts with subcommand {mode!r}")
    kw = {name: _section(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    cfg = RunConfig(mode=mode or given or "simulate", system=_system(data["system"]),
                    negative_control=bool(data.get("negative_control", False)),
                    samples=data.get("samples", 100), seed=data.get("seed", 0), **kw)
    validate(cfg)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    out = _listify(asdict(cfg))
    if isinstance(cfg.system, str):
        out["system"] = cfg.system
    return out


def _number(x, name, positive=False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{name} must be a finite number, got {x!r}")
    if positive and x <= 0:
        raise ConfigError(f"{name} must be positive, got {x!r}")
    return float(x)


def _vector(x, name, n=None) -> tuple:
    if not isinstance(x, tuple):
        raise ConfigError(f"{name} must be a list of numbers")
    for k, y in enumerate(x):
        _number(y, f"{name}[{k}]")
    if n is not None and len(x) != n:
        raise ConfigError(f"{name} has {len(x)} entries, expected {n}")
    return x


def validate(cfg: RunConfig) -> None:
    from .systems import AKS_BUILTINS, BUILTINS

    if cfg.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r}; expected one of {list(MODES)}")
    if isinstance(cfg.system, str):
        if cfg.system not in BUILTINS and cfg.system not in AKS_BUILTINS:
            raise ConfigError(f"unknown builtin system {cfg.system!r}; "
                              f"expected one of {sorted(BUILTINS) + sorted(AKS_BUILTINS)}")
        n = None
    else:
        s = cfg.system
        if isinstance(s.dim, bool) or not isinstance(s.dim, int) or s.dim < 1:
            raise ConfigError(f"system.dim must be a positive integer, got {s.dim!r}")
        if not isinstance(s.lagrangian, str):
            raise ConfigError("system.lagrangian must be an expression string")
        if s.force and (len(s.force) != s.dim or not all(isinstance(f, str) for f in s.force)):
            raise ConfigError(f"system.force must list {s.dim} expression strings")
        for k, v in s.params.items():
            _number(v, f"system.params.{k}")
        n = s.dim
    is_aks = isinstance(cfg.system, str) and cfg.system in AKS_BUILTINS
    if (cfg.mode == "aks") != is_aks:
        raise ConfigError("mode 'aks' requires an AKS builtin (and AKS builtins require mode 'aks')")

    it = cfg.integration
    _number(it.dt, "integration.dt", positive=True)
    _number(it.t0, "integration.t0")
    if it.t1 is not None:
        _number(it.t1, "integration.t1")
        if it.t1 <= it.t0:
            raise ConfigError(f"integration.t1 ({it.t1}) must exceed t0 ({it.t0})")
    if cfg.ic.q is not None:
        _vector(cfg.ic.q, "ic.q", n)
    if cfg.ic.v is not None:
        _vector(cfg.ic.v, "ic.v", n if n is not None else len(cfg.ic.q or cfg.ic.v))
    if (cfg.ic.q is None) != (cfg.ic.v is None):
        raise ConfigError("ic needs both q and v")
    if n is None and cfg.ic.q is not None and len(cfg.ic.q) != len(cfg.ic.v):
        raise ConfigError("ic.q and ic.v differ in length")
    if not isinstance(cfg.system, str) and cfg.ic.q is None:
        raise ConfigError("expression systems need an initial condition (ic.q, ic.v)")

    for d in cfg.outputs.diagnostics:
        if d not in DIAGNOSTICS:
            raise ConfigError(f"unknown diagnostic {d!r}; expected one of {list(DIAGNOSTICS)}")
    for f in fields(Tolerances):
        _number(getattr(cfg.tolerances, f.name), f"tolerances.{f.name}", positive=True)

    sym = cfg.symmetry
    _number(sym.gyro_sign, "symmetry.gyro_sign")
    if sym.mu is not None:
        _vector(sym.mu, "symmetry.mu")
    if sym.group_indices is not None:
        if n is not None and not all(isinstance(i, int) and 1 <= i <= n for i in sym.group_indices):
            raise ConfigError(f"symmetry.group_indices must be coordinates in 1..{n}")
        if sym.mu is not None and len(sym.mu) != len(sym.group_indices):
            raise ConfigError("symmetry.mu and symmetry.group_indices differ in length")
    if sym.generators is not None and n is not None:
        for k, g in enumerate(sym.generators):
            if len(g) != n:
                raise ConfigError(f"symmetry.generators[{k}] has {len(g)} components, expected {n}")
    if sym.connection is not None and sym.group_indices is None:
        raise ConfigError("symmetry.connection needs symmetry.group_indices")
    if sym.connection is not None and n is not None:
        m = len(sym.group_indices)
        if len(sym.connection) != m or any(len(row) != n - m for row in sym.connection):
            raise ConfigError(f"symmetry.connection must be a {m} x {n - m} array of expressions")
    if isinstance(cfg.system, ExprSystem) and cfg.mode in ("reduce", "compare"):
        if sym.group_indices is None or sym.mu is None:
            raise ConfigError(f"mode {cfg.mode!r} needs symmetry.group_indices and symmetry.mu")

    if cfg.aks.gauge not in ("lax", "static"):
        raise ConfigError(f"aks.gauge must be 'lax' or 'static', got {cfg.aks.gauge!r}")
    _number(cfg.aks.coupling, "aks.coupling")
    _number(cfg.aks.spread, "aks.spread")
    if cfg.aks.reference_dt is not None:
        _number(cfg.aks.reference_dt, "aks.reference_dt", positive=True)
    if isinstance(cfg.samples, bool) or not isinstance(cfg.samples, int) or cfg.samples < 1:
        raise ConfigError("samples must be a positive integer")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")


def load(path: str, mode: Optional[str] = None) -> list[RunConfig]:
    """One config per run; a JSON list describes a sweep."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    docs = data if isinstance(data, list) else [data]
    if not docs:
        raise ConfigError("empty sweep")
    return [from_dict(d, mode) for d in docs]


def effective(cfg: RunConfig, dt: Optional[float] = None, env=None) -> RunConfig:
    """Apply command-line and environment overrides."""
    env = os.environ if env is None else env
    if dt is not None:
        cfg = replace(cfg, integration=replace(cfg.integration, dt=_number(dt, "--dt", positive=True)))
    if SEED_ENV in env:
        try:
            cfg = replace(cfg, seed=int(env[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    validate(cfg)
    return cfg


def dump(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
