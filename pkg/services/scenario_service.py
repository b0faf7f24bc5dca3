"""Scenario orchestration: builds the geometric problem from a config, runs the requested
computation and collects named assertions for the report."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional
import numpy as np
from config.scenario_config import ScenarioConfig, load_config
from config.settings import settings
from geometry.builtins import build_manifold, build_form
from geometry.magnetic import MagneticSystem, lorentz_norm, rescale_into_R_sigma
from geometry.torus import TorusManifold
from loopspace.actions import action_sigma, action_total, atoroidal_test
from loopspace.discrete_loop import DiscreteLoop
from loopspace.lagrangian import LagrangianSystem, build_potential
from services.constants_service import (atoroidal_classes, constants_report, delta0, delta_lagrangian,
                                        growth_constants_kinetic, isoperimetric_constants, torus_window,
                                        verify_growth)
from services.hamiltonian_flow import (HamiltonianSystem, crosscheck_orbit, fenchel_dual, integrate,
                                       linearized_flow, magnetic_vector_field, symplectic_defect)
from services.report_service import ReportService, assertion, summarize
from services.variational_solver import index_sweep, loop_distance, survey
from utils.errors import ConfigError, MagflowError

logger = logging.getLogger(__name__)

# expectation keys checked by the orbit and index runners
RUNNER_EXPECTATIONS = ("min_orbits", "max_abs_action", "max_loop_diameter", "action", "straight_line", "indices")

@dataclass(frozen=True, eq=False)
class Problem:
    config: ScenarioConfig
    M: TorusManifold
    S: MagneticSystem
    L: LagrangianSystem
    H: HamiltonianSystem
    alpha: List[int]
    tau: float
    N: int
    upsilon: float = 1.0

@dataclass
class Diagnostics:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    notices: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

def build_problem(config: ScenarioConfig) -> Problem:
    """Metric, form, Lagrangian and Hamiltonian described by a config"""
    dim = config.manifold.dim
    alpha = config.alpha
    if len(alpha) != dim:
        raise ConfigError(f"class has {len(alpha)} entries but the torus has dimension {dim}", "/class")
    M = build_manifold(config.manifold.metric, dim, config.manifold.params)
    S = build_form(config.sigma.form, dim, config.sigma.params, config.sigma.delta)
    if config.sigma.primitive == "sampled":
        S = replace(S, theta_envelope=None)
    upsilon = 1.0
    if config.manifold.rescale:
        upsilon, M = rescale_into_R_sigma(M, S, level=settings.GRID_LEVEL)
    tau = config.system.tau
    params = dict(config.system.potential_params)
    if config.system.potential == "cosine_time":
        params.setdefault("period", tau)
    V = build_potential(config.system.potential, params)
    L = LagrangianSystem(M, V, config.system.family, config.system.eps)
    return Problem(config, M, S, L, fenchel_dual(M, L), alpha, tau, config.resolution, upsilon)

def _thresholds(problem: Problem) -> Dict[str, float]:
    M, S = problem.M, problem.S
    growth = growth_constants_kinetic(M, problem.L.potential)
    iso = isoperimetric_constants(M, S, problem.alpha)
    return {"delta0": delta0(growth, iso, S.growth_class), "delta_lagrangian": delta_lagrangian(growth.ell0, iso.C0)}

def validate_config(path: Any) -> Diagnostics:
    """Schema check plus semantic warnings for a scenario file"""
    diag = Diagnostics()
    try:
        config = load_config(path)
    except ConfigError as e:
        diag.errors.append(f"{e} (at {e.pointer})" if e.pointer else str(e))
        return diag
    if not config.winding:
        diag.notices.append("empty winding; defaulting to alpha = 0")
    try:
        problem = build_problem(config)
    except ConfigError as e:
        diag.errors.append(f"{e} (at {e.pointer})")
        return diag
    except (MagflowError, ValueError) as e:
        diag.errors.append(str(e))
        return diag
    S = problem.S
    if not S.has_primitive:
        diag.warnings.append("sigma has no primitive; action_sigma unavailable")
        return diag
    if not atoroidal_test(problem.M, S, problem.alpha):
        diag.warnings.append("class not sigma-atoroidal; action_sigma unavailable")
        return diag
    try:
        bounds = _thresholds(problem)
    except MagflowError as e:
        diag.warnings.append(f"thresholds unavailable: {e}")
        return diag
    dt = abs(S.delta) * problem.tau
    if dt >= bounds["delta0"]:
        diag.warnings.append(f"delta*tau = {dt:.6g} exceeds delta_0 = {bounds['delta0']:.6g}; "
                             "the compactness threshold is sufficient, not necessary, so the run proceeds")
    if dt >= bounds["delta_lagrangian"]:
        diag.warnings.append(f"delta*tau = {dt:.6g} exceeds delta(L, sigma, g) = {bounds['delta_lagrangian']:.6g}")
    return diag

def _expect_close(name: str, value: Optional[float], expected: float, tol: float) -> Dict[str, Any]:
    if value is None:
        return assertion(name, False, {"expected": expected, "value": None})
    ok = abs(value - expected) <= tol * max(1.0, abs(expected))
    return assertion(name, ok, {"expected": expected, "value": value, "tol": tol})

def _flatten(report: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in report.items():
        if isinstance(value, dict):
            flat.update(_flatten(value))
        else:
            flat.setdefault(key, value)
    return flat

def _circle_frequency(problem: Problem) -> Optional[float]:
    """Angular frequency per unit delta of magnetic circles on a flat 2-torus with constant sigma"""
    M, S, L = problem.M, problem.S, problem.L
    if M.dim == 2 and M.is_flat and S.constant_coefficients and L.is_translation_invariant and L.has_closed_form_dual:
        return lorentz_norm(M, S.with_delta(1.0))
    return None

class ScenarioService:
    def __init__(self):
        self.runners: Dict[str, Callable] = {
            "constants": self.run_constants,
            "orbits": self.run_orbits,
            "isoperimetric": self.run_isoperimetric,
            "flow": self.run_flow,
            "index_sweep": self.run_index_sweep,
        }

    def run_constants(self, problem: Problem, out: ReportService) -> Dict[str, Any]:
        """Every explicit constant, the growth-condition verdicts and the window prediction"""
        M, S, L, H = problem.M, problem.S, problem.L, problem.H
        cfg = problem.config
        report = constants_report(M, S, L.potential, problem.alpha, problem.tau, L)
        report["metric_scale"] = problem.upsilon
        growth = growth_constants_kinetic(M, L.potential, S, eps=L.eps)
        verdicts = verify_growth(M, H, growth, S, L)
        report["growth_verdicts"] = verdicts
        if M.dim <= 3:
            report["atoroidal_classes"] = [list(a) for a in atoroidal_classes(M, S, 1)]
        frequency = _circle_frequency(problem)
        if frequency is not None and S.delta != 0.0:
            f = abs(S.delta) * frequency
            report["torus_window"] = torus_window(f, f, problem.tau)
        checks = [assertion("growth_conditions",
                            all(v for k, v in verdicts.items() if k != "h2_q"), verdicts)]
        flat = _flatten(report)
        for key, expected in cfg.expect.items():
            if key in RUNNER_EXPECTATIONS:
                continue
            if isinstance(expected, (int, float)) and not isinstance(expected, bool):
                value = flat.get(key)
                checks.append(_expect_close(f"expect_{key}", None if value is None else float(value),
                                            float(expected), cfg.expect_tol))
            else:
                checks.append(assertion(f"expect_{key}", flat.get(key) == expected,
                                        {"expected": expected, "value": flat.get(key)}))
        return {"results": report, "assertions": checks}

    def run_orbits(self, problem: Problem, out: ReportService) -> Dict[str, Any]:
        """Multi-start survey in the configured class, cross-checked against the flow"""
        M, S, L, H = problem.M, problem.S, problem.L, problem.H
        cfg = problem.config
        coercivity = None
        if S.has_primitive and atoroidal_test(M, S, problem.alpha):
            try:
                iso = isoperimetric_constants(M, S, problem.alpha)
                growth = growth_constants_kinetic(M, L.potential)
                if abs(S.delta) * problem.tau < delta_lagrangian(growth.ell0, iso.C0):
                    coercivity = (iso, growth)
            except MagflowError as e:
                logger.warning("coercivity check disabled: %s", e)
        records, failed_seeds = survey(M, S, L, problem.alpha, cfg.solver, problem.tau, problem.N, coercivity)
        if cfg.flow.crosscheck:
            records = [crosscheck_orbit(M, S, H, rec, cfg.flow.crosscheck_dt, closure_tol=cfg.flow.closure_tol)
                       for rec in records]
        for i, rec in enumerate(records):
            out.write_loop(f"orbit{i}", rec.loop, {"metric": M.name, "sigma": S.name, "delta": S.delta,
                                                   "action": rec.action})
        expect = cfg.expect
        checks = [
            assertion("orbit_found", len(records) >= int(expect.get("min_orbits", 1)), {"count": len(records)}),
            assertion("critical_certificate", all(r.el_residual < 1e-8 for r in records),
                      [r.el_residual for r in records]),
        ]
        if coercivity is not None:
            checks.append(assertion("coercivity", all(r.coercivity_violations == 0 for r in records),
                                    [r.coercivity_violations for r in records]))
        if cfg.flow.crosscheck:
            checks.append(assertion("crosscheck_precondition", all(r.crosscheck_precondition for r in records),
                                    [r.el_residual for r in records]))
            checks.append(assertion("flow_closure", all(r.flow_consistent for r in records),
                                    [r.flow_closure_residual for r in records]))
        if "max_abs_action" in expect:
            checks.append(assertion("max_abs_action", all(abs(r.action) < expect["max_abs_action"] for r in records),
                                    [r.action for r in records]))
        if "max_loop_diameter" in expect:
            checks.append(assertion("max_loop_diameter",
                                    all(r.loop.cover_diameter() < expect["max_loop_diameter"] for r in records),
                                    [r.loop.cover_diameter() for r in records]))
        if "action" in expect:
            actions = [r.action for r in records]
            best = min((abs(a - expect["action"]) for a in actions), default=math.inf)
            checks.append(assertion("action", best <= cfg.expect_tol * max(1.0, abs(expect["action"])),
                                    {"expected": expect["action"], "found": actions}))
        if expect.get("straight_line"):
            distances = [loop_distance(r.loop, DiscreteLoop.straight_line(problem.alpha, r.loop.N, problem.tau), True)
                         for r in records]
            checks.append(assertion("straight_line", bool(distances) and min(distances) < 1e-6, distances))
        return {"results": {"orbits": [r.to_dict() for r in records], "failed_seeds": failed_seeds},
                "assertions": checks}

    def run_isoperimetric(self, problem: Problem, out: ReportService) -> Dict[str, Any]:
        """Random loops against the isoperimetric and coercivity inequalities"""
        M, S, L = problem.M, problem.S, problem.L
        cfg = problem.config
        iso = isoperimetric_constants(M, S, problem.alpha)
        growth = growth_constants_kinetic(M, L.potential)
        delta, tau = S.delta, problem.tau
        check_coercive = abs(delta) * tau < delta_lagrangian(growth.ell0, iso.C0)
        rows = []
        iso_violations = coercive_violations = 0
        for i in range(cfg.isoperimetric.samples):
            rng = np.random.default_rng([cfg.solver.rng_seed, i])
            modes = int(rng.integers(1, cfg.isoperimetric.max_modes + 1))
            amplitude = float(rng.uniform(0.01, cfg.isoperimetric.max_amplitude))
            q = DiscreteLoop.random_fourier(problem.alpha, problem.N, tau, rng, modes, amplitude)
            area = action_sigma(M, S, q)
            length = q.length(M)
            bound = iso.C0 * length ** 2 + iso.C1
            row = {"sample": i, "action_sigma": area, "length": length, "bound": bound}
            if abs(area) > bound:
                iso_violations += 1
            if check_coercive:
                total = action_total(M, S, L, q)
                lower = ((growth.ell0 - abs(delta) * iso.C0 * tau) * q.velocity_l2_sq()
                         - (abs(delta) * iso.C1 + growth.D * tau))
                row["action_total"] = total
                row["coercive_lower_bound"] = lower
                if total < lower - 1e-12:
                    coercive_violations += 1
            rows.append(row)
        out.write_table("isoperimetric", rows)
        checks = [assertion("isoperimetric_inequality", iso_violations == 0,
                            {"samples": len(rows), "violations": iso_violations})]
        if check_coercive:
            checks.append(assertion("coercivity", coercive_violations == 0,
                                    {"samples": len(rows), "violations": coercive_violations}))
        results = {"isoperimetric": iso.to_dict(), "samples": len(rows),
                   "max_ratio": max((abs(r["action_sigma"]) / r["bound"] for r in rows if r["bound"] > 0.0), default=0.0)}
        return {"results": results, "assertions": checks}

    def run_flow(self, problem: Problem, out: ReportService) -> Dict[str, Any]:
        """Magnetic circles, energy drift, monodromy symplecticity and the Liouville identity"""
        M, S, H = problem.M, problem.S, problem.H
        cfg = problem.config.flow
        frequency = _circle_frequency(problem)
        deltas = cfg.deltas if cfg.deltas is not None else [S.delta]
        q0 = np.zeros(M.dim)
        e1 = np.eye(M.dim)[0]
        p0 = cfg.speed * e1 / float(M.dual_norm(e1, q0))
        z0 = np.concatenate([q0, p0])
        runs, checks = [], []
        for delta in deltas:
            Sd = S.with_delta(delta)
            closes = frequency is not None and delta != 0.0
            period = 2.0 * math.pi / (abs(delta) * frequency) if closes else (cfg.t_final or problem.tau)
            traj = integrate(M, Sd, H, z0, period, cfg.dt)
            residual = float(np.linalg.norm(traj.final - z0))
            z1, Phi = linearized_flow(M, Sd, H, z0, period, cfg.monodromy_dt)
            defect = symplectic_defect(M, Sd, z0, z1, Phi)
            out.write_trajectory(f"trajectory_delta{delta:g}", traj, cfg.trajectory_every)
            run = {"delta": delta, "period": period, "closure_residual": residual,
                   "energy_drift": traj.energy_drift, "symplectic_defect": defect, "monodromy": Phi}
            runs.append(run)
            if closes:
                checks.append(assertion(f"circle_closure_delta_{delta:g}", residual < cfg.closure_tol, residual))
            checks.append(assertion(f"monodromy_symplectic_delta_{delta:g}", defect < 1e-6, defect))
            if traj.energy_drift is not None:
                checks.append(assertion(f"energy_drift_delta_{delta:g}", traj.energy_drift < 1e-8, traj.energy_drift))
        rng = np.random.default_rng([problem.config.solver.rng_seed, 7])
        q = rng.uniform(-2.0, 2.0, size=(64, M.dim))
        p = rng.normal(size=(64, M.dim))
        gaps = []
        for delta in (0.0, 5.0):
            X = magnetic_vector_field(M, S.with_delta(delta), H, 0.0, q, p)
            _, H_p = H.gradients(0.0, q, p)
            gaps.append(float(np.max(np.abs(np.einsum("ki,ki->k", p, X[:, :M.dim])
                                            - np.einsum("ki,ki->k", p, H_p)))))
        checks.append(assertion("liouville_identity", max(gaps) < 1e-12, gaps))
        return {"results": {"flows": runs}, "assertions": checks}

    def run_index_sweep(self, problem: Problem, out: ReportService) -> Dict[str, Any]:
        """Morse index of constant loops across delta and N, against the window prediction"""
        cfg = problem.config
        rows = index_sweep(problem.M, problem.S, problem.L, cfg.sweep.deltas, cfg.sweep.N_values,
                           problem.tau, tol_null=cfg.solver.tol_null)
        out.write_table("index_sweep", rows)
        by_delta: Dict[float, List[int]] = {}
        for row in rows:
            by_delta.setdefault(row["delta"], []).append(row["index"])
        checks = [assertion("index_stable_in_N", all(len(set(v)) == 1 for v in by_delta.values()), by_delta)]
        predicted = [r for r in rows if r["predicted_index"] is not None]
        if predicted:
            checks.append(assertion("index_matches_window",
                                    all(r["index"] == r["predicted_index"] for r in predicted),
                                    [(r["delta"], r["N"], r["index"], r["predicted_index"]) for r in predicted]))
        if "indices" in cfg.expect:
            column = [v[0] for v in by_delta.values()]
            checks.append(assertion("expected_indices", column == list(cfg.expect["indices"]),
                                    {"expected": cfg.expect["indices"], "found": column}))
        return {"results": {"index_sweep": rows}, "assertions": checks}

    def _guarded(self, name: str, runner: Callable, problem: Problem, out: ReportService) -> Dict[str, Any]:
        try:
            return runner(problem, out)
        except (MagflowError, ValueError) as e:
            logger.error("%s failed: %s", name, e)
            return {"results": {"error": str(e)}, "assertions": [assertion(f"{name}_completed", False, str(e))]}

    def run_scenario(self, config: ScenarioConfig) -> Dict[str, Any]:
        """Run one scenario and write its report files; the report carries the assertion summary"""
        problem = build_problem(config)
        name = config.outputs.name or config.scenario
        out = ReportService(config.outputs.directory, name, config.outputs.formats)
        dt = abs(problem.S.delta) * problem.tau
        warnings: List[str] = []
        if problem.S.has_primitive and atoroidal_test(problem.M, problem.S, problem.alpha):
            try:
                bounds = _thresholds(problem)
                if dt >= bounds["delta0"]:
                    warnings.append(f"delta*tau = {dt:.6g} is not below delta_0 = {bounds['delta0']:.6g}")
                if dt >= bounds["delta_lagrangian"]:
                    warnings.append(f"delta*tau = {dt:.6g} is not below delta(L, sigma, g) = "
                                    f"{bounds['delta_lagrangian']:.6g}; coercivity is not checked")
            except MagflowError as e:
                logger.warning("thresholds unavailable: %s", e)
        for w in warnings:
            logger.warning(w)
        if config.scenario == "full_report":
            results, checks = {}, []
            for step in ("constants", "index_sweep", "flow", "isoperimetric", "orbits"):
                part = self._guarded(step, self.runners[step], problem, out)
                results[step] = part["results"]
                checks.extend(dict(a, name=f"{step}/{a['name']}") for a in part["assertions"])
        else:
            part = self._guarded(config.scenario, self.runners[config.scenario], problem, out)
            results, checks = part["results"], part["assertions"]
        report = {
            "scenario": config.scenario,
            "config": config.model_dump(by_alias=True),
            "warnings": warnings,
            "results": results,
            "assertions": checks,
            "summary": summarize(checks),
            "files": list(out.written),
        }
        out.write_json(report)
        return report

scenario_service = ScenarioService()

def run_scenario(config: ScenarioConfig) -> Dict[str, Any]:
    return scenario_service.run_scenario(config)
