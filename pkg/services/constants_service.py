"""Explicit constants of the magnetic problem: isoperimetric C0/C1, growth constants,
the thresholds delta_0 and delta(L, sigma, g), and the flat-torus window predictions."""
import logging
import math
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional, Sequence
import numpy as np
from geometry.torus import TorusManifold
from geometry.magnetic import (MagneticSystem, BOUNDED, NONE, diameter, lorentz_norm,
                               primitive_growth_constant)
from loopspace.discrete_loop import DiscreteLoop
from loopspace.lagrangian import LagrangianSystem, Potential
from loopspace.actions import atoroidal_test
from services.hamiltonian_flow import HamiltonianSystem, builtin_kinetic, sample_field_bound
from utils.errors import ClassError, GeometryError
from utils.helpers import unit_grid, winding_vectors
from config.settings import settings

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
SUPPLIED = "supplied"

@dataclass(frozen=True)
class IsoperimetricConstants:
    C0: float
    C1: float
    d: float
    Theta: float
    ell_alpha: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

@dataclass(frozen=True)
class GrowthConstants:
    eta1: float
    k1: float
    eta2: float
    k2: float
    h_sigma_g: float
    ell1: float
    ell2: float
    ell0: float
    D: float
    source: str = CLOSED_FORM

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

def isoperimetric_from(Theta: float, d: float, ell_alpha: float) -> IsoperimetricConstants:
    """C0 = (2 + d) Theta and C1 from the linear-growth primitive bound"""
    C0 = (2.0 + d) * Theta
    C1 = (Theta * (d + 1.0) * d + Theta * (d + 1.0)
          + Theta * (d + ell_alpha + 1.0) * d + Theta * (ell_alpha + 1.0) * ell_alpha)
    return IsoperimetricConstants(C0, C1, d, Theta, ell_alpha)

def reference_loop(M: TorusManifold, alpha: Sequence[int], N: int = 64, tau: float = 1.0) -> DiscreteLoop:
    """Straight-line lift t -> t alpha / tau starting at the origin"""
    return DiscreteLoop.straight_line(alpha, N, tau)

def isoperimetric_constants(M: TorusManifold, S: MagneticSystem, alpha: Sequence[int],
                            reference: Optional[DiscreteLoop] = None) -> IsoperimetricConstants:
    """Constants of |A_sigma(q)| <= C0 (int |q'| dt)^2 + C1 on the class alpha"""
    if S.growth_class == NONE:
        raise GeometryError("no primitive available")
    if not atoroidal_test(M, S, alpha):
        raise ClassError("action_sigma gauge-dependent on this class")
    if reference is None:
        reference = reference_loop(M, alpha)
    z = reference.samples[0]
    d = diameter(M)
    Theta = S.analytic_theta(M, z)
    if Theta is None:
        Theta = primitive_growth_constant(M, S, z)
        logger.info("sampled primitive growth constant %.6g at %s", Theta, z.tolist())
    ell_alpha = reference.length(M)
    return isoperimetric_from(float(Theta), d, ell_alpha)

def _metric_spectrum(M: TorusManifold, level: int) -> tuple:
    G = M.metric(unit_grid(M.dim, level))
    eig = np.linalg.eigvalsh(G)
    return float(np.min(eig)), float(np.max(eig))

def growth_constants_kinetic(M: TorusManifold, V: Potential, S: Optional[MagneticSystem] = None,
                             level: Optional[int] = None, eps: float = 0.0) -> GrowthConstants:
    """Closed-form growth constants of H = 1/2 |p|^2 + V and L = 1/2 |v|^2 - V"""
    level = settings.GRID_LEVEL if level is None else level
    lo, hi = V.bounds(M.dim, level)
    max_v = max(0.0, hi)
    lam_min, lam_max = _metric_spectrum(M, level)
    if lam_min <= 0.0:
        raise GeometryError("metric not positive definite")
    h_sigma = 0.0
    if S is not None:
        points = unit_grid(M.dim, min(level, 2 if M.dim > 2 else level))
        h_sigma = sample_field_bound(M, S, builtin_kinetic(M, V), points)
    return GrowthConstants(eta1=0.5, k1=max_v, eta2=1.0, k2=0.0, h_sigma_g=h_sigma,
                           ell1=lam_min, ell2=lam_max * (1.0 + eps), ell0=0.5 * lam_min, D=max_v)

def delta0(H_constants: GrowthConstants, iso: IsoperimetricConstants, sigma_class: str) -> float:
    """eta1 / (2 C0 eta2); +inf for bounded primitives or a vanishing form"""
    if sigma_class == BOUNDED or iso.C0 == 0.0:
        return math.inf
    return H_constants.eta1 / (2.0 * iso.C0 * H_constants.eta2)

def delta_lagrangian(ell0: float, C0: float) -> float:
    """ell0 / C0, +inf when C0 = 0"""
    if C0 == 0.0:
        return math.inf
    return ell0 / C0

def coercivity_bound(iso: IsoperimetricConstants, growth: GrowthConstants, delta: float,
                     tau: float, action: float) -> float:
    """Upper bound on ||q'||^2_{L2} from S >= (ell0 - |delta| C0 tau) ||q'||^2 - (|delta| C1 + D tau)"""
    gap = growth.ell0 - abs(delta) * iso.C0 * tau
    if gap <= 0.0:
        return math.inf
    return (action + abs(delta) * iso.C1 + growth.D * tau) / gap

def torus_window(f_min: float, f_max: float, tau: float) -> Optional[Dict[str, int]]:
    """Integer k with 2 pi (k - 1) / tau < f < 2 pi k / tau for all f in [f_min, f_max]"""
    lo, hi = tau * f_min / (2.0 * math.pi), tau * f_max / (2.0 * math.pi)
    if lo <= 0.0 and hi >= 0.0:
        return None
    k = math.floor(lo) + 1
    if not (k - 1 < lo and hi < k):
        return None
    return {"k": int(k), "homology_shift": 2 * int(k), "predicted_index": max(0, 2 * (int(k) - 1))}

def predicted_constant_index(delta: float, tau: float) -> Optional[int]:
    """Morse index of constant loops for the flat area form, |delta| tau off 2 pi Z"""
    window = torus_window(abs(delta), abs(delta), tau) if delta != 0.0 else {"predicted_index": 0}
    return None if window is None else window["predicted_index"]

def atoroidal_classes(M: TorusManifold, S: MagneticSystem, max_winding: int) -> List[tuple]:
    """Winding vectors with entries in [-max_winding, max_winding] passing atoroidal_test"""
    return [alpha for alpha in winding_vectors(M.dim, max_winding) if atoroidal_test(M, S, alpha)]

def verify_growth(M: TorusManifold, H: HamiltonianSystem, constants: GrowthConstants,
                  S: Optional[MagneticSystem] = None, L: Optional[LagrangianSystem] = None,
                  level: Optional[int] = None, p_max: float = 10.0, tol: float = 1e-9) -> Dict[str, Any]:
    """Grid verification of the growth conditions with the stored constants.

    Verdicts: H1 (dH(Z) - H >= eta1 |p|^2 - k1), H2_p (|dH/dp|^2 <= eta2 |p|^2 + k2),
    H2_q (sampled sup |dH/dq| / (1 + |p|^2) is finite, reported as h2_q), L1 (ell1 <= L_vv <= ell2),
    coercivity (L >= ell0 |v|^2 - D) and field_bound (|X| <= h_sigma_g (1 + |p|^2)).
    """
    level = settings.GRID_LEVEL if level is None else level
    n = M.dim
    points = unit_grid(n, min(level, 2))
    directions = np.vstack([np.eye(n), -np.eye(n), np.ones((1, n)) / math.sqrt(n)])
    verdicts: Dict[str, Any] = {"H1": True, "H2_p": True, "H2_q": True, "L1": True,
                                "coercivity": True, "field_bound": True}
    h2_q = 0.0
    for t in (0.0, 0.25, 0.5, 0.75):
        for r in (0.0, 0.5, 1.0, 3.0, p_max):
            for d in directions:
                p = np.broadcast_to(r * d, points.shape)
                jet = H.jet(t, points, p)
                p_sq = M.dual_norm(p, points) ** 2
                dHZ = np.einsum("...i,...i->...", p, jet.H_p)
                if np.any(dHZ - jet.H < constants.eta1 * p_sq - constants.k1 - tol * (1.0 + p_sq)):
                    verdicts["H1"] = False
                Hp_sq = M.norm(jet.H_p, points) ** 2
                if np.any(Hp_sq > constants.eta2 * p_sq + constants.k2 + tol * (1.0 + p_sq)):
                    verdicts["H2_p"] = False
                h2_q = max(h2_q, float(np.max(M.dual_norm(jet.H_q, points) / (1.0 + p_sq))))
                if L is not None:
                    v = np.broadcast_to(r * d, points.shape)
                    lj = L.jet(t, points, v)
                    eig = np.linalg.eigvalsh(lj.L_vv)
                    if np.any(eig[..., 0] < constants.ell1 - tol) or np.any(eig[..., -1] > constants.ell2 + tol):
                        verdicts["L1"] = False
                    if np.any(lj.L < constants.ell0 * r * r - constants.D - tol * (1.0 + r * r)):
                        verdicts["coercivity"] = False
    if S is not None:
        # same nested grid the constant was sampled on
        sampled = sample_field_bound(M, S, H, points)
        verdicts["field_bound"] = sampled <= constants.h_sigma_g * (1.0 + 1e-9) + tol
    verdicts["H2_q"] = bool(np.isfinite(h2_q))
    verdicts["h2_q"] = h2_q
    return verdicts

def constants_report(M: TorusManifold, S: MagneticSystem, V: Potential, alpha: Sequence[int],
                     tau: float = 1.0, L: Optional[LagrangianSystem] = None) -> Dict[str, Any]:
    """Every constant for one configuration, ready for the JSON report"""
    report: Dict[str, Any] = {"lorentz_norm": lorentz_norm(M, S, settings.GRID_LEVEL)}
    growth = growth_constants_kinetic(M, V, S, eps=L.eps if L is not None else 0.0)
    report["growth"] = growth.to_dict()
    try:
        iso = isoperimetric_constants(M, S, alpha)
    except (ClassError, GeometryError) as e:
        logger.warning("isoperimetric constants unavailable: %s", e)
        report["isoperimetric"] = None
        report["isoperimetric_error"] = str(e)
        return report
    report["isoperimetric"] = iso.to_dict()
    d0 = delta0(growth, iso, S.growth_class)
    dL = delta_lagrangian(growth.ell0, iso.C0)
    report["delta0"] = d0
    report["delta_lagrangian"] = dL
    report["delta_tau"] = abs(S.delta) * tau
    report["below_delta0"] = abs(S.delta) * tau < d0
    report["below_delta_lagrangian"] = abs(S.delta) * tau < dL
    if abs(S.delta) * tau >= d0:
        logger.warning("delta*tau = %.6g is not below delta_0 = %.6g (sufficient bound, not sharp)",
                       abs(S.delta) * tau, d0)
    return report
