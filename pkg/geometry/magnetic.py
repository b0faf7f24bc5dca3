"""Magnetic 2-forms on tori, their primitives on the cover, and the Lorentz force.

Sign conventions: sigma(u, v) = u^T Sigma(q) v with sigma = sum_{i<j} Sigma_ij dq_i ^ dq_j,
and a primitive theta (a covector field on R^n) satisfies Sigma = J^T - J where
J[i, k] = d theta_i / d q_k. The Lorentz matrix Y solves <Y u, v>_g = sigma(u, v),
which gives Y = -G^{-1} Sigma.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple
import numpy as np
from scipy import linalg as sla
from geometry.torus import TorusManifold, FLAT, GENERAL
from utils.errors import GeometryError
from utils.helpers import unit_grid, midpoint_grid, sphere_directions, lattice_neighbours

logger = logging.getLogger(__name__)

BOUNDED = "bounded"
LINEAR = "linear"
NONE = "none"
GROWTH_CLASSES = (BOUNDED, LINEAR, NONE)

ArrayFn = Callable[[np.ndarray], np.ndarray]

@dataclass(frozen=True, eq=False)
class MagneticSystem:
    dim: int
    sigma_fn: ArrayFn
    theta_fn: Optional[ArrayFn] = None
    theta_jac_fn: Optional[ArrayFn] = None
    theta_hess_fn: Optional[ArrayFn] = None
    sigma_deriv_fn: Optional[ArrayFn] = None
    growth_class: str = LINEAR
    delta: float = 1.0
    name: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)
    # certified envelope Theta(M, z) for built-in primitives
    theta_envelope: Optional[Callable[[TorusManifold, np.ndarray], Optional[float]]] = None
    constant_coefficients: bool = False

    def __post_init__(self):
        if self.growth_class not in GROWTH_CLASSES:
            raise GeometryError(f"unknown growth class '{self.growth_class}'")
        if self.theta_fn is None and self.growth_class != NONE:
            object.__setattr__(self, "growth_class", NONE)

    @property
    def has_primitive(self) -> bool:
        """Check if a primitive on the universal cover is available"""
        return self.theta_fn is not None and self.growth_class != NONE

    def sigma(self, q: np.ndarray) -> np.ndarray:
        """Antisymmetric coefficient matrix Sigma(q), periodic in q"""
        q = np.asarray(q, dtype=float)
        return np.asarray(self.sigma_fn(np.mod(q, 1.0)), dtype=float)

    def sigma_derivs(self, q: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """dSigma/dq_k stacked as [..., k, i, j]"""
        q = np.asarray(q, dtype=float)
        if self.sigma_deriv_fn is not None:
            return np.asarray(self.sigma_deriv_fn(np.mod(q, 1.0)), dtype=float)
        n = self.dim
        out = np.zeros(q.shape[:-1] + (n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            out[..., k, :, :] = (self.sigma(q + e) - self.sigma(q - e)) / (2.0 * step)
        return out

    def theta(self, q: np.ndarray) -> np.ndarray:
        """Primitive covector at a cover point (not reduced mod Z^n)"""
        if not self.has_primitive:
            raise GeometryError("no primitive available")
        return np.asarray(self.theta_fn(np.asarray(q, dtype=float)), dtype=float)

    def theta_jacobian(self, q: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """J[..., i, k] = d theta_i / d q_k"""
        q = np.asarray(q, dtype=float)
        if self.theta_jac_fn is not None:
            return np.asarray(self.theta_jac_fn(q), dtype=float)
        n = self.dim
        out = np.zeros(q.shape[:-1] + (n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            out[..., :, k] = (self.theta(q + e) - self.theta(q - e)) / (2.0 * step)
        return out

    def theta_hessian(self, q: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """d2 theta_i / dq_k dq_l stacked as [..., i, k, l]"""
        q = np.asarray(q, dtype=float)
        if self.theta_hess_fn is not None:
            return np.asarray(self.theta_hess_fn(q), dtype=float)
        n = self.dim
        out = np.zeros(q.shape[:-1] + (n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = step
            out[..., :, :, l] = (self.theta_jacobian(q + e) - self.theta_jacobian(q - e)) / (2.0 * step)
        return out

    def with_delta(self, delta: float) -> "MagneticSystem":
        """Same form with another field strength multiplier"""
        return replace(self, delta=float(delta))

    def scaled(self, c: float) -> "MagneticSystem":
        """The form c * sigma with its primitive c * theta"""
        c = float(c)

        def mul(fn):
            return None if fn is None else (lambda q: c * fn(q))

        envelope = self.theta_envelope
        scaled_envelope = None
        if envelope is not None:
            def scaled_envelope(M, z):
                value = envelope(M, z)
                return None if value is None else abs(c) * value
        params = dict(self.params, scale=self.params.get("scale", 1.0) * c)
        return replace(self, sigma_fn=mul(self.sigma_fn), theta_fn=mul(self.theta_fn),
                       theta_jac_fn=mul(self.theta_jac_fn), theta_hess_fn=mul(self.theta_hess_fn),
                       sigma_deriv_fn=mul(self.sigma_deriv_fn), params=params,
                       theta_envelope=scaled_envelope)

    def analytic_theta(self, M: TorusManifold, z: np.ndarray) -> Optional[float]:
        """Certified growth constant Theta_z when the primitive is a built-in"""
        if self.theta_envelope is None:
            return None
        return self.theta_envelope(M, np.asarray(z, dtype=float))

def lorentz_force(M: TorusManifold, S: MagneticSystem, q: np.ndarray) -> np.ndarray:
    """Lorentz matrix Y(q) with <Y(q) u, v>_g = sigma_q(u, v)"""
    G = M.metric(q)
    Sigma = S.sigma(q)
    try:
        M.assert_positive_definite(G)
        return -np.linalg.solve(G, Sigma)
    except np.linalg.LinAlgError:
        raise GeometryError("metric not positive definite")

def operator_norm(M: TorusManifold, Y: np.ndarray, q: np.ndarray) -> float:
    """sup |Y v|_g / |v|_g at a single point"""
    G = M.metric(q)
    A = Y.T @ G @ Y
    top = sla.eigh(0.5 * (A + A.T), G, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))

def lorentz_norm(M: TorusManifold, S: MagneticSystem, level: int = 3) -> float:
    """||Y_{sigma,g}||_{L^inf_g} estimated on the nested grid of the given level"""
    if M.is_flat and S.constant_coefficients:
        points = np.zeros((1, M.dim))
    else:
        points = unit_grid(M.dim, level)
    best = 0.0
    for q in points:
        best = max(best, operator_norm(M, lorentz_force(M, S, q), q))
    return best

def rescale_into_R_sigma(M: TorusManifold, S: MagneticSystem, margin: float = 0.0,
                         level: int = 3) -> Tuple[float, TorusManifold]:
    """Scale the metric so that the Lorentz norm drops to at most one"""
    norm = lorentz_norm(M, S, level)
    upsilon = max(1.0, norm * (1.0 + margin))
    if upsilon == 1.0:
        return 1.0, M
    logger.info("rescaling metric of %s by %.6g (Lorentz norm %.6g)", M.name, upsilon, norm)
    return upsilon, M.scaled(upsilon)

def primitive_growth_constant(M: TorusManifold, S: MagneticSystem, z: np.ndarray,
                              r_max: float = 4.0, shells: int = 16, directions: int = 64) -> float:
    """Smallest Theta with max |theta| over sampled B(z, r) <= Theta (r + 1) for r <= r_max"""
    if not S.has_primitive:
        raise GeometryError("no primitive available")
    z = np.asarray(z, dtype=float)
    G0 = M.metric(z)
    chol = np.linalg.cholesky(G0)
    # unit vectors in the metric at z
    units = np.linalg.solve(chol.T, sphere_directions(M.dim, directions).T).T
    radii = r_max * np.arange(shells + 1) / shells
    running = 0.0
    theta_const = 0.0
    for r in radii:
        pts = z + r * units if r > 0 else z[None, :]
        values = M.dual_norm(S.theta(pts), pts)
        running = max(running, float(np.max(values)))
        theta_const = max(theta_const, running / (r + 1.0))
    return theta_const

def diameter(M: TorusManifold, per_axis: Optional[int] = None) -> float:
    """diam(M, g): covering radius of Z^n under G (flat) or an upper estimate (conformal)"""
    if M.kind == GENERAL:
        raise GeometryError("diameter unavailable; supply manually")
    gram = np.asarray(M.gram)
    flat_d = _flat_diameter(gram, per_axis)
    if M.kind == FLAT:
        return flat_d
    samples = unit_grid(M.dim, 5 if M.dim <= 2 else 3)
    stretch = float(np.max(np.exp(M.f(samples))))
    return stretch * flat_d

def _flat_diameter(gram: np.ndarray, per_axis: Optional[int]) -> float:
    n = gram.shape[0]
    if np.allclose(gram, np.diag(np.diag(gram)), atol=0.0):
        return 0.5 * float(np.sqrt(np.trace(gram)))
    if per_axis is None:
        per_axis = {2: 128, 3: 32}.get(n, 8)
    points = midpoint_grid(n, per_axis)
    lattice = lattice_neighbours(n)
    best = 0.0
    for chunk in np.array_split(points, max(1, len(points) // 4096)):
        diff = chunk[:, None, :] - lattice[None, :, :]
        dist = np.sqrt(np.einsum("pmi,ij,pmj->pm", diff, gram, diff))
        best = max(best, float(np.max(np.min(dist, axis=1))))
    return best

def tameness_defect(M: TorusManifold, S: MagneticSystem, q: np.ndarray,
                    horizontal: np.ndarray, vertical: np.ndarray) -> float:
    """omega_sigma(J xi, xi) - 1/2 G_g(xi, xi) in the horizontal-vertical frame"""
    G = M.metric(q)
    Sigma = S.sigma(q)
    a, b = np.asarray(horizontal, float), np.asarray(vertical, float)
    # J(a, b) = (-b, a); omega((a1,b1),(a2,b2)) = <b1,a2> - <a1,b2> + sigma(a1,a2)
    ja, jb = -b, a
    omega = jb @ G @ a - ja @ G @ b + ja @ Sigma @ a
    energy = a @ G @ a + b @ G @ b
    return float(omega - 0.5 * energy)

def antisymmetry_defect(S: MagneticSystem, points: np.ndarray) -> float:
    """max |Sigma + Sigma^T| over the sample points"""
    Sig = S.sigma(points)
    return float(np.max(np.abs(Sig + np.swapaxes(Sig, -1, -2))))

def closedness_defect(S: MagneticSystem, points: np.ndarray, step: float = 1e-5) -> float:
    """max cyclic sum d_i Sigma_jk + d_j Sigma_ki + d_k Sigma_ij by central differences"""
    n = S.dim
    if n < 3:
        return 0.0
    worst = 0.0
    for q in np.atleast_2d(points):
        d = np.zeros((n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            d[k] = (S.sigma(q + e) - S.sigma(q - e)) / (2.0 * step)
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    cyc = d[i, j, k] + d[j, k, i] + d[k, i, j]
                    worst = max(worst, abs(cyc))
    return worst

def primitive_defect(S: MagneticSystem, points: np.ndarray, step: float = 1e-5) -> float:
    """max |d theta - Sigma| with d theta from central differences of theta"""
    n = S.dim
    worst = 0.0
    for q in np.atleast_2d(points):
        J = np.zeros((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            J[:, k] = (S.theta(q + e) - S.theta(q - e)) / (2.0 * step)
        worst = max(worst, float(np.max(np.abs((J.T - J) - S.sigma(q)))))
    return worst

def periodicity_defect(M: TorusManifold, S: Optional[MagneticSystem], rng: np.random.Generator,
                       count: int = 100, reach: int = 5) -> float:
    """max |G(q + m) - G(q)| (and |Sigma(q + m) - Sigma(q)|) over random q, m"""
    worst = 0.0
    for _ in range(count):
        q = rng.uniform(-reach, reach, size=M.dim)
        m = rng.integers(-reach, reach + 1, size=M.dim).astype(float)
        worst = max(worst, float(np.max(np.abs(M.metric(q + m) - M.metric(q)))))
        if S is not None:
            worst = max(worst, float(np.max(np.abs(S.sigma(q + m) - S.sigma(q)))))
    return worst
