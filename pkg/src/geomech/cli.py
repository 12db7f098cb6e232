"""Command-line front end.

    geomech simulate|reduce|compare|check|aks --config run.json [--out DIR] [--dt DT] [--jobs N]

Exit status: 0 success, 2 invalid input, 3 numerical failure, 4 a check
exceeded its tolerance.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import aks, config
from .exprlang import ExprEvalError, ExprSyntaxError, compile_chart, declared_names, free_variables, parse
from .geomcalc import NumericalEvaluationError, ScalarField
from .integrate import SimulationError, Trajectory, simulate
from .liegroup import FactorizationOutsideBigCell
from .mech import (DegenerateLagrangian, Frame, LagrangianSystem, canonical_section, cartan_form_coeffs,
                   energy, trajectory_residuals)
from .symmetry import (ConstraintSolveFailure, GroupAction, InvarianceFailure, MomentumLevelMismatch,
                       PrincipalConnection, build_reduced_system, check_invariance, equivalence_check,
                       momentum_map, routh_decompose, routh_recompose)
from .systems import AKS_BUILTINS, BUILTINS

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 2, 3, 4

NUMERICAL_ERRORS = (ArithmeticError, np.linalg.LinAlgError, SimulationError, FloatingPointError)


@dataclass
class Model:
    system: LagrangianSystem
    q0: np.ndarray
    v0: np.ndarray
    action: Optional[GroupAction]
    connection: Optional[PrincipalConnection]
    mu: Optional[np.ndarray]
    t1: float


# --- building systems from configs --------------------------------------------

def _compile(source: str, names, what: str, params):
    try:
        return compile_chart(parse(source, names), params)
    except ExprSyntaxError as exc:
        raise config.ConfigError(f"{what}: {exc}") from exc


def _expr_system(spec: config.ExprSystem) -> LagrangianSystem:
    n = spec.dim
    names = declared_names(n, spec.params)
    params = dict(spec.params)
    func = _compile(spec.lagrangian, names, "lagrangian", params)

    F = None
    if spec.force:
        comps = [_compile(src, names, f"force[{k}]", params) for k, src in enumerate(spec.force)]

        def force(t, q, v):
            return np.array([c(t, q, v) for c in comps])
        F = force
    time_dependent = any("t" in free_variables(parse(src)) for src in (spec.lagrangian, *spec.force))
    return LagrangianSystem(n, ScalarField(func, n, label="expr"), F, label="expr",
                            time_dependent=time_dependent)


def _expr_action(sym: config.SymmetrySpec, n: int, params) -> Optional[GroupAction]:
    if sym.generators is None:
        if sym.group_indices is None:
            return None
        return GroupAction.translations(n, [i - 1 for i in sym.group_indices])
    names = declared_names(n, params)
    zeros = np.zeros(n)
    gens = []
    for a, vec in enumerate(sym.generators):
        comps = [_compile(src, names, f"symmetry.generators[{a}][{i}]", params) for i, src in enumerate(vec)]
        gens.append(lambda q, comps=comps: np.array([c(0.0, q, zeros) for c in comps]))
    structure = None if sym.structure is None else np.array(sym.structure, float)
    return GroupAction(len(gens), tuple(gens), structure)


def _expr_connection(sym: config.SymmetrySpec, n: int, params) -> Optional[PrincipalConnection]:
    if sym.group_indices is None:
        return None
    group = [i - 1 for i in sym.group_indices]
    if sym.connection is None:
        return PrincipalConnection.split(n, group)
    base = [i for i in range(n) if i not in group]
    names = declared_names(n, params)
    zeros = np.zeros(n)
    rows = [[_compile(src, names, f"symmetry.connection[{a}][{i}]", params) for i, src in enumerate(row)]
            for a, row in enumerate(sym.connection)]
    # the coefficients may only depend on base coordinates
    forbidden = {f"q{g + 1}" for g in group} | {f"v{i}" for i in range(1, n + 1)} | {"t"}
    for a, row in enumerate(sym.connection):
        if len(row) != len(base):
            raise config.ConfigError(f"symmetry.connection[{a}] needs {len(base)} entries")
        for src in row:
            bad = free_variables(parse(src)) & forbidden
            if bad:
                raise config.ConfigError(f"symmetry.connection[{a}] depends on {sorted(bad)}")

    def A(s):
        q = np.zeros(n)
        q[base] = s
        return np.array([[c(0.0, q, zeros) for c in row] for row in rows])
    return PrincipalConnection.split(n, group, A)


def build_model(cfg: config.RunConfig) -> Model:
    sym = cfg.symmetry
    if isinstance(cfg.system, str):
        m = BUILTINS[cfg.system]()
        system, action, conn, mu, t1 = m.system, m.action, m.connection, m.mu, m.t1
        q0, v0 = m.q0, m.v0
        n = system.n
        if sym.group_indices is not None or sym.generators is not None:
            action = _expr_action(sym, n, {})
            conn = _expr_connection(sym, n, {})
    else:
        system = _expr_system(cfg.system)
        n = system.n
        action = _expr_action(sym, n, cfg.system.params)
        conn = _expr_connection(sym, n, cfg.system.params)
        mu, t1, q0, v0 = None, 10.0, None, None
    if cfg.ic.q is not None:
        q0, v0 = np.array(cfg.ic.q, float), np.array(cfg.ic.v, float)
        if q0.shape != (n,) or v0.shape != (n,):
            raise config.ConfigError(f"ic needs {n} coordinates and {n} velocities")
    if sym.mu is not None:
        mu = np.array(sym.mu, float)
    if cfg.integration.t1 is not None:
        t1 = cfg.integration.t1
    return Model(system, q0, v0, action, conn, mu, t1)


# --- output ---------------------------------------------------------------------

def csv_header(n: int, diagnostics) -> list[str]:
    return (["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"v{i}" for i in range(1, n + 1)]
            + [f"p{i}" for i in range(1, n + 1)] + list(diagnostics))


def write_csv(path: str, traj: Trajectory) -> None:
    names = list(traj.diagnostics)
    cols = [traj.times[:, None], traj.q, traj.v, traj.p] + [traj.diagnostics[k][:, None] for k in names]
    np.savetxt(path, np.hstack(cols), fmt="%.17g", delimiter=",",
               header=",".join(csv_header(traj.n, names)), comments="")


def _diagnostics(cfg, model: Model):
    out = {}
    for name in cfg.outputs.diagnostics:
        if name == "energy":
            out["energy"] = lambda t, q, v, p, s=model.system: energy(s, t, q, v)
        elif name == "J" and model.action is not None:
            for a in range(model.action.m):
                out[f"J{a + 1}"] = lambda t, q, v, p, a=a: float(model.action.generator_matrix(q)[a] @ p)
    return out


class Report:
    """Collects check lines and their verdicts."""

    def __init__(self, stream=None):
        self.stream = stream or sys.stdout
        self.failed = []

    def value(self, name: str, value: float, tol: float, at_least: bool = False) -> bool:
        ok = bool(value >= tol) if at_least else bool(value <= tol)
        rel = ">=" if at_least else "<="
        self.stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (required {rel} {tol:g})\n")
        if not ok:
            self.failed.append(name)
        return ok

    def info(self, text: str) -> None:
        self.stream.write(text + "\n")

    @property
    def code(self) -> int:
        return EXIT_TOLERANCE if self.failed else EXIT_OK


# --- modes ----------------------------------------------------------------------

def _need(model: Model, *what):
    for w in what:
        if getattr(model, w) is None:
            raise config.ConfigError(f"this mode needs {w} (builtin default or config)")


def run_simulate(cfg, model: Model, report: Report) -> Trajectory:
    _need(model, "q0")
    it = cfg.integration
    return simulate(model.system, (model.q0, model.v0), (it.t0, model.t1), it.dt, _diagnostics(cfg, model))


def run_reduce(cfg, model: Model, report: Report) -> Trajectory:
    _need(model, "q0", "action", "connection", "mu")
    red = build_reduced_system(model.system, model.action, model.connection, model.mu,
                               gyro_sign=cfg.symmetry.gyro_sign)
    s0, sdot0 = red.project(model.q0, model.v0)
    diag = {}
    if "energy" in cfg.outputs.diagnostics:
        diag["energy"] = lambda t, q, v, p: energy(red.system, t, q, v)
    it = cfg.integration
    return simulate(red.system, (s0, sdot0), (it.t0, model.t1), it.dt, diag)


def run_compare(cfg, model: Model, report: Report) -> Trajectory:
    _need(model, "q0", "action", "connection", "mu")
    tol = cfg.tolerances
    T = model.t1 - cfg.integration.t0
    res = equivalence_check(model.system, model.action, model.connection, model.mu, (model.q0, model.v0),
                            T, cfg.integration.dt, gyro_sign=cfg.symmetry.gyro_sign)
    report.value("max base deviation", res.max_base_deviation, tol.base_deviation)
    report.value("momentum drift", res.momentum_drift, tol.noether)
    if cfg.negative_control:
        flipped = equivalence_check(model.system, model.action, model.connection, model.mu,
                                    (model.q0, model.v0), T, cfg.integration.dt,
                                    gyro_sign=-cfg.symmetry.gyro_sign)
        report.value("negative control deviation (gyroscopic sign flipped)", flipped.max_base_deviation,
                     tol.negative_control, at_least=True)
    full = res.full
    base = list(model.connection.base_indices)
    dev = np.max(np.abs(full.q[:, base] - res.reduced.q), axis=1)
    return Trajectory(full.times + cfg.integration.t0, full.q, full.v, full.p,
                      {**full.diagnostics, "base_dev": dev})


def run_check(cfg, model: Model, report: Report) -> Trajectory:
    _need(model, "q0")
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    sys_ = model.system
    n = sys_.n
    diag = _diagnostics(replace(cfg, outputs=replace(cfg.outputs, diagnostics=("energy", "J"))), model)
    it = cfg.integration
    traj = simulate(sys_, (model.q0, model.v0), (it.t0, model.t1), it.dt, diag)

    if model.action is not None:
        J = np.column_stack([traj.diagnostics[f"J{a + 1}"] for a in range(model.action.m)])
        report.value("Noether drift max|J(t)-J(0)|", float(np.max(np.abs(J - J[0]))), tol.noether)
        samples = [(float(rng.uniform()), q, rng.normal(size=n))
                   for q in traj.q[rng.integers(0, len(traj), size=min(cfg.samples, 16))]]
        inv = check_invariance(sys_, model.action, samples, tol.invariance)
        report.value("invariance defect", max(inv.lagrangian_defect, inv.force_defect), tol.invariance)

    stride = max(1, len(traj) // 2000)
    frames = [Frame.coordinate(n), Frame.polynomial(n, rng)]
    for fr in frames:
        r = trajectory_residuals(sys_, fr, traj.times, traj.q, traj.v, traj.p, stride=stride)
        report.value(f"quasi-EL residuals ({fr.kind} frame)", r, tol.residual)

    worst = 0.0
    for _ in range(cfg.samples):
        q = rng.normal(size=n) + model.q0
        v = rng.normal(size=n)
        t = float(rng.uniform())
        pt = canonical_section(sys_, t, q, v)
        a, b = cartan_form_coeffs(sys_, pt)
        e = energy(sys_, t, q, v)
        worst = max(worst, abs(a + e), float(np.max(np.abs(b - pt.p))))
    report.value("Cartan form vs (-E, dL/dv)", worst, tol.cartan)

    if model.connection is not None:
        worst = 0.0
        for _ in range(cfg.samples):
            q = rng.normal(size=n) + model.q0
            alpha = rng.normal(size=n)
            a_hat, sigma = routh_decompose(alpha, model.connection, q)
            worst = max(worst, float(np.max(np.abs(routh_recompose(a_hat, sigma, model.connection, q) - alpha))))
        report.value("Routh decompose/recompose", worst, tol.routh)
    if model.action is not None and model.mu is not None:
        J0 = momentum_map(sys_, model.action, it.t0, model.q0, model.v0)
        report.info(f"momentum at t0: {np.array2string(J0, precision=17)}")
    return traj


def run_aks(cfg, report: Report) -> Trajectory:
    d = AKS_BUILTINS[cfg.system]
    tol = cfg.tolerances
    spec = cfg.aks
    params = aks.toda_params(d, spread=spec.spread, coupling=spec.coupling)
    t1 = cfg.integration.t1 if cfg.integration.t1 is not None else 10.0
    T = t1 - cfg.integration.t0
    dt = cfg.integration.dt
    check = aks.isospectral_check(params, T, dt, spec.reference_dt, spec.gauge)
    report.value("tr(Lambda^2) drift", check.drift_tr2, tol.spectral)
    report.value("tr(Lambda^3) drift", check.drift_tr3, tol.spectral)
    if spec.reference_dt is not None:
        report.value(f"trace gap to dt={spec.reference_dt:g} reference", check.reference_trace_gap, tol.reference)
        report.value(f"state gap to dt={spec.reference_dt:g} reference", check.reference_state_gap, tol.reference)
    if spec.unreduced_check:
        u = aks.unreduced_check(aks.bounded_params(d), T, dt)
        report.value("unreduced residuals (exact flow)", u.worst_residual, tol.unreduced)
        report.value("unreduced K+ x K- momentum drift", u.momentum_drift, tol.momentum)
    if spec.phi_check:
        ph = aks.phi_equivalence(params, T, dt)
        report.value("Phi-mapped reduced vs Feher state deviation", ph.max_state_deviation, tol.phi)
    traj = aks.as_trajectory(check.trajectory)
    return Trajectory(traj.times + cfg.integration.t0, traj.q, traj.v, traj.p, traj.diagnostics)


MODES = {"simulate": run_simulate, "reduce": run_reduce, "compare": run_compare, "check": run_check}


def execute(cfg: config.RunConfig, out_dir: str, stream=None) -> int:
    """Run one effective config; writes the CSV and the config sidecar."""
    report = Report(stream)
    start = time.perf_counter()
    try:
        if cfg.mode == "aks":
            traj = run_aks(cfg, report)
        else:
            model = build_model(cfg)
            traj = MODES[cfg.mode](cfg, model, report)
    except (config.ConfigError, ExprSyntaxError, InvarianceFailure, MomentumLevelMismatch) as exc:
        report.info(f"error: {exc}")
        return EXIT_INVALID
    except SimulationError as exc:
        report.info(f"numerical failure: {exc} ({len(exc.partial)} samples completed)")
        return EXIT_NUMERICAL
    except (DegenerateLagrangian, ConstraintSolveFailure, FactorizationOutsideBigCell, aks.GramSingular,
            ExprEvalError, NumericalEvaluationError) + NUMERICAL_ERRORS as exc:
        report.info(f"numerical failure: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.outputs.csv or f"{cfg.mode}_{cfg.label}.csv"
    path = os.path.join(out_dir, name)
    write_csv(path, traj)
    config.dump(cfg, sidecar_path(path))
    report.info(f"wrote {path} ({len(traj)} rows) in {time.perf_counter() - start:.2f} s")
    return report.code


def sidecar_path(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".config.json"


def _run_one(args):
    cfg, out_dir = args
    return execute(cfg, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="geomech", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=config.MODES)
    parser.add_argument("--config", required=True, help="JSON run configuration (a list runs a sweep)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--dt", type=float, default=None, help="override integration.dt")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent runs in a sweep")
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfgs = [config.effective(c, args.dt) for c in config.load(args.config, args.mode)]
    except (config.ConfigError, ExprSyntaxError) as exc:
        print(f"error: {exc}")
        return EXIT_INVALID
    if len(cfgs) == 1:
        return execute(cfgs[0], args.out)
    jobs = [(c, os.path.join(args.out, f"run_{k:03d}")) for k, c in enumerate(cfgs)]
    if args.jobs == 1:
        codes = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, jobs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
