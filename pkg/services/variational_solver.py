"""Critical points of the twisted Lagrangian action in a fixed free homotopy class.

Descent follows the W12 gradient with Armijo backtracking; Newton refinement solves the
discrete Euler-Lagrange system with the L2 Hessian restricted to the complement of its
near-null space (time shifts and translations are symmetries of autonomous flat systems).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple
import numpy as np
from scipy import linalg as sla
from pydantic import BaseModel, ConfigDict, Field
from geometry.torus import TorusManifold
from geometry.magnetic import MagneticSystem, lorentz_norm
from loopspace.discrete_loop import DiscreteLoop
from loopspace.lagrangian import LagrangianSystem
from loopspace.actions import (W12, L2, action_total, gradient, hessian, inner_product,
                               require_atoroidal)
from services.constants_service import (IsoperimetricConstants, GrowthConstants, coercivity_bound,
                                        delta_lagrangian, torus_window)
from utils.errors import MagflowError, SolverError
from config.settings import settings

logger = logging.getLogger(__name__)

DENSE_LIMIT = 3000

class SolverParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    max_iters: int = Field(default=2000, ge=1)
    step_rule: str = Field(default="backtracking", pattern="^(fixed|backtracking)$")
    grad_tol: float = Field(default=1e-9, gt=0)
    newton_switch_tol: float = Field(default=1e-3, gt=0)
    tol_null: float = Field(default=1e-7, gt=0)
    seeds: int = Field(default=8, ge=1)
    rng_seed: int = 0
    fixed_step: float = Field(default=0.5, gt=0)
    armijo: float = Field(default=1e-4, gt=0, lt=1)
    min_step: float = Field(default=1e-14, gt=0)
    newton_tol: float = Field(default=1e-10, gt=0)
    newton_max_iter: int = Field(default=25, ge=1)
    dedup_tol: float = Field(default=1e-4, gt=0)
    action_tol: float = Field(default=1e-6, gt=0)
    modes: int = Field(default=3, ge=0)
    amplitude: float = Field(default=0.2, ge=0)

class DescentStep(NamedTuple):
    iter: int
    action: float
    grad_norm: float
    step: float
    velocity_l2_sq: float
    pseudo_ratio: float

@dataclass(frozen=True, eq=False)
class DescentTrajectory:
    loop: DiscreteLoop
    steps: List[DescentStep]
    converged: bool
    coercivity_violations: int = 0
    coercivity_checked: bool = False

    @property
    def history(self) -> List[Tuple[int, float, float]]:
        """(iter, action, grad_norm) per iterate"""
        return [(s.iter, s.action, s.grad_norm) for s in self.steps]

    @property
    def actions(self) -> np.ndarray:
        return np.array([s.action for s in self.steps])

    @property
    def final_grad_norm(self) -> float:
        return self.steps[-1].grad_norm

@dataclass(frozen=True, eq=False)
class OrbitRecord:
    loop: DiscreteLoop
    action: float
    el_residual: float
    morse_index: int
    nullity: int
    nondegenerate: bool
    grad_norm: float = 0.0
    newton_refined: bool = False
    flow_closure_residual: Optional[float] = None
    flow_consistent: Optional[bool] = None
    monodromy: Optional[np.ndarray] = None
    seed: Optional[int] = None
    coercivity_violations: int = 0
    crosscheck_precondition: Optional[bool] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "N": self.loop.N,
            "tau": self.loop.tau,
            "winding": self.loop.winding.tolist(),
            "action": self.action,
            "el_residual": self.el_residual,
            "grad_norm": self.grad_norm,
            "morse_index": self.morse_index,
            "nullity": self.nullity,
            "nondegenerate": self.nondegenerate,
            "newton_refined": self.newton_refined,
            "flow_closure_residual": self.flow_closure_residual,
            "flow_consistent": self.flow_consistent,
            "loop_mean": self.loop.mean().tolist(),
            "loop_diameter": self.loop.cover_diameter(),
            "seed": self.seed,
            "coercivity_violations": self.coercivity_violations,
            "crosscheck_precondition": self.crosscheck_precondition,
            "notes": list(self.notes),
        }
        if self.monodromy is not None:
            out["monodromy"] = self.monodromy.tolist()
        return out

class MorseIndex(NamedTuple):
    index: int
    nullity: int

def _grad_norm(q: DiscreteLoop, g: np.ndarray) -> float:
    return float(np.sqrt(inner_product(q, g, g, W12)))

def descend(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q0: DiscreteLoop,
            params: SolverParams,
            coercivity: Optional[Tuple[IsoperimetricConstants, GrowthConstants]] = None) -> DescentTrajectory:
    """W12 gradient descent with Armijo backtracking from q0"""
    require_atoroidal(M, S, q0.winding)
    q = q0.ensure_resolution()
    tau = q.tau
    check_coercivity = False
    if coercivity is not None:
        iso, growth = coercivity
        threshold = delta_lagrangian(growth.ell0, iso.C0)
        check_coercivity = abs(S.delta) * tau < threshold
        if not check_coercivity:
            logger.warning("|delta| tau = %.6g is not below delta(L, sigma, g) = %.6g",
                           abs(S.delta) * tau, threshold)
    violations = 0
    steps: List[DescentStep] = []
    action = action_total(M, S, L, q)
    step = 1.0 if params.step_rule == "backtracking" else params.fixed_step
    converged = False
    for it in range(params.max_iters + 1):
        g = gradient(M, S, L, q, W12)
        g_sq = inner_product(q, g, g, W12)
        grad_norm = float(np.sqrt(g_sq))
        g2 = gradient(M, S, L, q, L2)
        l2_norm = float(np.sqrt(inner_product(q, g2, g2)))
        # dS(q) G(q) / ||dS(q)||
        ratio = g_sq / l2_norm if l2_norm > 0.0 else 1.0
        v_sq = q.velocity_l2_sq()
        steps.append(DescentStep(it, action, grad_norm, step, v_sq, ratio))
        if check_coercivity:
            bound = coercivity_bound(iso, growth, S.delta, tau, action)
            if v_sq > bound * (1.0 + 1e-9):
                violations += 1
                logger.warning("iterate %d: ||q'||^2 = %.6g exceeds coercivity bound %.6g", it, v_sq, bound)
        logger.debug("descent iter %d: action %.12g, |grad| %.3e, step %.3e, pseudo-gradient ratio %.3e",
                     it, action, grad_norm, step, ratio)
        if grad_norm < params.grad_tol:
            converged = True
            break
        if it == params.max_iters:
            break
        if params.step_rule == "fixed":
            q = q.with_samples(q.samples - step * g)
            action = action_total(M, S, L, q)
            continue
        while True:
            candidate = q.with_samples(q.samples - step * g)
            trial = action_total(M, S, L, candidate)
            if trial <= action - params.armijo * step * g_sq:
                break
            step *= 0.5
            if step < params.min_step:
                raise SolverError("descent stalled", {"iter": it, "action": action,
                                                      "grad_norm": grad_norm, "step": step})
        q, action = candidate, trial
        step = min(1.0, 2.0 * step)
    if converged:
        logger.info("descent converged in %d iterations (action %.12g)", len(steps) - 1, action)
    else:
        logger.warning("descent hit max_iters=%d with |grad| %.3e", params.max_iters, steps[-1].grad_norm)
    return DescentTrajectory(q, steps, converged, violations, check_coercivity)

def _spectrum(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return sla.eigh(H)

def inertia(H: np.ndarray, tol_null: float) -> MorseIndex:
    """Counts of eigenvalues below -tol_null and within +-tol_null"""
    if H.shape[0] <= DENSE_LIMIT:
        eig = sla.eigh(H, eigvals_only=True)
        return MorseIndex(int(np.sum(eig < -tol_null)), int(np.sum(np.abs(eig) <= tol_null)))
    eye = np.eye(H.shape[0])
    below_minus = _negative_count(H + tol_null * eye)
    below_plus = _negative_count(H - tol_null * eye)
    return MorseIndex(below_minus, below_plus - below_minus)

def _negative_count(A: np.ndarray) -> int:
    """Negative eigenvalues of A via the block-diagonal factor of its LDL^T factorization"""
    _, D, _ = sla.ldl(A)
    n = D.shape[0]
    band = np.zeros((2, n))
    band[1] = np.diag(D)
    band[0, 1:] = np.diag(D, 1)
    return int(np.sum(sla.eigvals_banded(band) < 0.0))

def morse_index(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop,
                tol_null: float) -> MorseIndex:
    """(index, nullity) of the discrete second variation at q"""
    result = inertia(hessian(M, S, L, q), tol_null)
    logger.info("Morse index %d, nullity %d at N=%d", result.index, result.nullity, q.N)
    return result

def _record(M, S, L, q, params, refined: bool, seed=None, notes=()) -> OrbitRecord:
    g2 = gradient(M, S, L, q, L2)
    gw = gradient(M, S, L, q, W12)
    index, nullity = morse_index(M, S, L, q, params.tol_null)
    return OrbitRecord(loop=q, action=action_total(M, S, L, q), el_residual=float(np.max(np.abs(g2))),
                       morse_index=index, nullity=nullity, nondegenerate=nullity == 0,
                       grad_norm=_grad_norm(q, gw), newton_refined=refined, seed=seed, notes=tuple(notes))

def _newton(M, S, L, q: DiscreteLoop, params: SolverParams) -> DiscreteLoop:
    previous = np.inf
    for it in range(params.newton_max_iter):
        g = gradient(M, S, L, q, L2)
        residual = float(np.max(np.abs(g)))
        logger.debug("newton iter %d: EL residual %.3e", it, residual)
        if residual < params.newton_tol:
            return q
        if it >= 3 and residual > 0.5 * previous:
            raise SolverError("degenerate critical point; Newton unavailable",
                              {"iter": it, "el_residual": residual})
        previous = residual
        w, V = _spectrum(hessian(M, S, L, q))
        keep = np.abs(w) > params.tol_null
        coeffs = V.T @ g.ravel()
        total = float(np.linalg.norm(coeffs))
        if float(np.linalg.norm(coeffs[~keep])) > 0.5 * total:
            raise SolverError("degenerate critical point; Newton unavailable",
                              {"iter": it, "el_residual": residual, "null_modes": int(np.sum(~keep))})
        delta_x = V[:, keep] @ (coeffs[keep] / w[keep])
        q = q.with_samples(q.samples - delta_x.reshape(q.N, q.dim))
    residual = float(np.max(np.abs(gradient(M, S, L, q, L2))))
    if residual < params.newton_tol:
        return q
    raise SolverError("degenerate critical point; Newton unavailable", {"el_residual": residual})

def refine_newton(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop,
                  params: SolverParams, seed: Optional[int] = None) -> OrbitRecord:
    """Newton refinement of a near-critical loop; falls back to the unrefined record"""
    require_atoroidal(M, S, q.winding)
    q = q.ensure_resolution()
    g = gradient(M, S, L, q, L2)
    l2 = float(np.sqrt(inner_product(q, g, g)))
    if l2 >= params.newton_switch_tol:
        logger.warning("Newton started with |grad|_L2 = %.3e above the switch tolerance %.3e",
                       l2, params.newton_switch_tol)
    try:
        refined = _newton(M, S, L, q, params)
    except SolverError as e:
        logger.warning("%s (%s); returning the descent-only record", e, e.diagnostics)
        return _record(M, S, L, q, params, False, seed, (str(e),))
    return _record(M, S, L, refined, params, True, seed)

def loop_distance(a: DiscreteLoop, b: DiscreteLoop, continuous_translations: bool = False) -> float:
    """min over time shifts and lattice (or all) translations of the discrete L2 distance"""
    if a.N != b.N or not np.array_equal(a.winding, b.winding):
        return np.inf
    best = np.inf
    for s in range(b.N):
        diff = a.samples - b.time_shift(s).samples
        mean = diff.mean(axis=0)
        diff = diff - (mean if continuous_translations else np.round(mean))
        best = min(best, float(np.sqrt(a.h * np.sum(diff * diff))))
    return best

def dedupe(records: Sequence[OrbitRecord], params: SolverParams, continuous_translations: bool) -> List[OrbitRecord]:
    """Drop records equal to an earlier one up to time shift and translation"""
    kept: List[OrbitRecord] = []
    for rec in records:
        duplicate = False
        for other in kept:
            if abs(rec.action - other.action) > params.action_tol:
                continue
            if loop_distance(rec.loop, other.loop, continuous_translations) < params.dedup_tol:
                duplicate = True
                break
        if not duplicate:
            kept.append(rec)
    return kept

def is_translation_symmetric(S: MagneticSystem, L: LagrangianSystem) -> bool:
    return L.is_translation_invariant and S.constant_coefficients

class SeedOutcome(NamedTuple):
    record: Optional[OrbitRecord]
    error: Optional[str] = None

def _survey_seed(M, S, L, alpha, params: SolverParams, tau: float, N: int, i: int,
                 coercivity=None) -> SeedOutcome:
    rng = np.random.default_rng([params.rng_seed, i])
    try:
        q0 = DiscreteLoop.random_fourier(alpha, N, tau, rng, params.modes, params.amplitude)
        traj = descend(M, S, L, q0, params, coercivity)
        rec = refine_newton(M, S, L, traj.loop, params, seed=i)
    except (MagflowError, ValueError) as e:
        logger.warning("seed %d failed: %s %s", i, e, getattr(e, "diagnostics", ""))
        return SeedOutcome(None, str(e))
    rec = replace(rec, coercivity_violations=traj.coercivity_violations)
    if rec.el_residual >= 1e-8 or rec.grad_norm >= params.grad_tol:
        logger.warning("seed %d: no certified critical point (EL residual %.3e)", i, rec.el_residual)
        return SeedOutcome(None)
    return SeedOutcome(rec)

class SurveyOutcome(NamedTuple):
    orbits: List[OrbitRecord]
    failed_seeds: List[int]

def survey(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, alpha: Sequence[int],
           params: SolverParams, tau: float = 1.0, N: Optional[int] = None,
           coercivity: Optional[Tuple[IsoperimetricConstants, GrowthConstants]] = None) -> SurveyOutcome:
    """Descent + Newton from seeded random loops in class alpha, deduplicated, in seed order.

    A seed whose descent or refinement raises is logged and listed in failed_seeds; the others still count.
    """
    require_atoroidal(M, S, alpha)
    N = settings.DEFAULT_RESOLUTION if N is None else int(N)
    seeds = range(params.seeds)
    run = lambda i: _survey_seed(M, S, L, alpha, params, tau, N, i, coercivity)
    if settings.is_parallel:
        with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(i) for i in seeds]
    failed = [i for i, r in zip(seeds, results) if r.error is not None]
    if failed:
        logger.warning("survey of class %s: seeds %s failed", list(alpha), failed)
    found = [r.record for r in results if r.record is not None]
    unique = dedupe(found, params, is_translation_symmetric(S, L))
    logger.info("survey of class %s: %d certified runs, %d distinct orbits", list(alpha), len(found), len(unique))
    return SurveyOutcome(unique, failed)

def multi_start_survey(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, alpha: Sequence[int],
                       params: SolverParams, tau: float = 1.0, N: Optional[int] = None,
                       coercivity: Optional[Tuple[IsoperimetricConstants, GrowthConstants]] = None,
                       ) -> List[OrbitRecord]:
    return survey(M, S, L, alpha, params, tau, N, coercivity).orbits

def index_sweep(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, deltas: Sequence[float],
                N_values: Sequence[int], tau: float = 1.0, point: Optional[Sequence[float]] = None,
                tol_null: float = 1e-7) -> List[Dict[str, Any]]:
    """Morse index and nullity of a constant loop for each delta and N, with the window prediction"""
    point = np.zeros(M.dim) if point is None else np.asarray(point, dtype=float)
    unit = S.with_delta(1.0)
    predictable = M.dim == 2 and M.is_flat and S.constant_coefficients and L.is_translation_invariant
    frequency = lorentz_norm(M, unit) if predictable else None
    rows = []
    for delta in deltas:
        system = S.with_delta(float(delta))
        predicted = None
        if frequency is not None:
            f = abs(float(delta)) * frequency
            window = torus_window(f, f, tau) if f > 0.0 else {"predicted_index": 0}
            predicted = None if window is None else window["predicted_index"]
        for N in N_values:
            q = DiscreteLoop.constant(point, int(N), tau)
            index, nullity = morse_index(M, system, L, q, tol_null)
            rows.append({"delta": float(delta), "N": int(N), "index": index, "nullity": nullity,
                         "predicted_index": predicted})
    return rows
