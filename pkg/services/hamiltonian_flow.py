"""Hamiltonian side of the magnetic problem: Fenchel duality, the twisted vector field,
fixed-step RK4 flows, variational equations and orbit cross-checks.

Cover coordinates z = (q, p). The twisted form is omega = dp ^ dq + delta pi*sigma, so
    q' = dH/dp,   p' = -dH/dq + delta Sigma(q) dH/dp.
With tangent vectors split as (a, b) the form reads
    omega((a1, b1), (a2, b2)) = b1 . a2 - a1 . b2 + delta a1^T Sigma a2.
"""
import logging
from dataclasses import dataclass, replace
from typing import Any, NamedTuple, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from geometry.torus import TorusManifold
from geometry.magnetic import MagneticSystem
from loopspace.lagrangian import LagrangianSystem, Potential
from utils.errors import FlowError, LegendreError
from config.settings import settings

logger = logging.getLogger(__name__)

BUILTIN_KINETIC = "builtin_kinetic"
FENCHEL_OF = "fenchel_of"
CROSSCHECK_EL_TOL = 1e-6

class HamiltonianJet(NamedTuple):
    H: np.ndarray
    H_q: np.ndarray
    H_p: np.ndarray
    H_qq: np.ndarray
    H_qp: np.ndarray   # [..., k, i] = d2H / dq_k dp_i
    H_pp: np.ndarray

@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    manifold: TorusManifold
    origin: str = BUILTIN_KINETIC
    potential: Potential = None
    lagrangian: Optional[LagrangianSystem] = None
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.origin not in (BUILTIN_KINETIC, FENCHEL_OF):
            raise ValueError(f"unknown Hamiltonian origin '{self.origin}'")
        if self.origin == FENCHEL_OF and self.lagrangian is None:
            raise ValueError("fenchel_of needs the source Lagrangian")
        if self.potential is None:
            pot = self.lagrangian.potential if self.lagrangian is not None else Potential()
            object.__setattr__(self, "potential", pot)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def is_autonomous(self) -> bool:
        return self.potential.is_autonomous

    def value(self, t: Any, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.origin == BUILTIN_KINETIC:
            q, p = np.asarray(q, float), np.asarray(p, float)
            u = np.linalg.solve(self.manifold.metric(q), p[..., None])[..., 0]
            return 0.5 * np.einsum("...i,...i->...", p, u) + self.potential.value(t, q)
        return self.jet(t, q, p).H

    def gradients(self, t: Any, q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(dH/dq, dH/dp) without second derivatives"""
        if self.origin == FENCHEL_OF:
            jet = self.jet(t, q, p)
            return jet.H_q, jet.H_p
        q, p = np.asarray(q, float), np.asarray(p, float)
        M = self.manifold
        u = np.linalg.solve(M.metric(q), p[..., None])[..., 0]
        H_q = self.potential.grad(t, q)
        if not M.is_flat:
            H_q = H_q - 0.5 * np.einsum("...i,...kij,...j->...k", u, M.metric_derivs(q), u)
        return H_q, u

    def jet(self, t: Any, q: np.ndarray, p: np.ndarray) -> HamiltonianJet:
        """Value and all first/second derivatives, batched over leading axes"""
        if self.origin == FENCHEL_OF:
            return self._fenchel_jet(t, q, p)
        q, p = np.asarray(q, float), np.asarray(p, float)
        M = self.manifold
        Ginv = np.linalg.inv(M.metric(q))
        dG = M.metric_derivs(q)
        u = np.einsum("...ij,...j->...i", Ginv, p)
        w = np.einsum("...kij,...j->...ki", dG, u)                  # dG_k u
        H = 0.5 * np.einsum("...i,...i->...", p, u) + self.potential.value(t, q)
        H_q = -0.5 * np.einsum("...ki,...i->...k", w, u) + self.potential.grad(t, q)
        H_qp = -np.einsum("...ij,...kj->...ki", Ginv, w)
        H_qq = (np.einsum("...ki,...ij,...lj->...kl", w, Ginv, w)
                - 0.5 * np.einsum("...i,...klij,...j->...kl", u, M.metric_second_derivs(q), u)
                + self.potential.hess(t, q))
        return HamiltonianJet(H, H_q, u, H_qq, H_qp, Ginv)

    def velocity_of(self, t: Any, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Fiber Newton solve of grad_v L(t, q, v) = p"""
        L = self.lagrangian
        q, p = np.asarray(q, float), np.asarray(p, float)
        v = np.linalg.solve(self.manifold.metric(q), p[..., None])[..., 0]
        for _ in range(self.newton_max_iter):
            jet = L.jet(t, q, v)
            residual = jet.L_v - p
            if not np.all(np.isfinite(residual)):
                break
            if np.max(np.abs(residual), initial=0.0) < self.newton_tol:
                return v
            v = v - np.linalg.solve(jet.L_vv, residual[..., None])[..., 0]
        residual = np.max(np.abs(L.grad_v(t, q, v) - p), axis=-1)
        residual = np.where(np.isfinite(residual), residual, np.inf)
        if np.max(residual, initial=0.0) < 10 * self.newton_tol:
            return v
        worst = np.unravel_index(int(np.argmax(residual)), residual.shape)
        tq = np.broadcast_to(np.asarray(t, float), q.shape[:-1])
        raise LegendreError(f"Legendre solve failed at t={float(tq[worst])!r}, q={q[worst].tolist()}, "
                            f"p={p[worst].tolist()}")

    def _fenchel_jet(self, t: Any, q: np.ndarray, p: np.ndarray) -> HamiltonianJet:
        q, p = np.asarray(q, float), np.asarray(p, float)
        v = self.velocity_of(t, q, p)
        lj = self.lagrangian.jet(t, q, v)
        Lvv_inv = np.linalg.inv(lj.L_vv)
        H = np.einsum("...i,...i->...", p, v) - lj.L
        H_qp = -np.einsum("...kj,...ji->...ki", lj.L_qv, Lvv_inv)
        H_qq = -lj.L_qq + np.einsum("...kj,...ji,...li->...kl", lj.L_qv, Lvv_inv, lj.L_qv)
        return HamiltonianJet(H, -lj.L_q, v, H_qq, H_qp, Lvv_inv)

    def momentum(self, t: Any, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Fiber derivative p = grad_v L of the Lagrangian this Hamiltonian is dual to"""
        if self.lagrangian is not None:
            return self.lagrangian.grad_v(t, q, v)
        return np.einsum("...ij,...j->...i", self.manifold.metric(q), np.asarray(v, float))

def builtin_kinetic(M: TorusManifold, potential: Optional[Potential] = None) -> HamiltonianSystem:
    """H = 1/2 |p|^2_{g*} + V(t, q)"""
    return HamiltonianSystem(M, BUILTIN_KINETIC, potential or Potential())

def fenchel_dual(M: TorusManifold, L: LagrangianSystem, closed_form: bool = True) -> HamiltonianSystem:
    """Legendre dual of L; closed form for the kinetic family, fiber Newton otherwise"""
    if L.manifold is not M:
        raise ValueError("Lagrangian is defined over a different manifold")
    if closed_form and L.has_closed_form_dual:
        return HamiltonianSystem(M, BUILTIN_KINETIC, L.potential, L)
    return HamiltonianSystem(M, FENCHEL_OF, L.potential, L)

def inverse_legendre(H: HamiltonianSystem, t: Any, q: np.ndarray, v: np.ndarray,
                     tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Fenchel dual of H at a velocity: sup_p p.v - H, by Newton on dH/dp = v"""
    q, v = np.asarray(q, float), np.asarray(v, float)
    p = np.einsum("...ij,...j->...i", H.manifold.metric(q), v)
    for _ in range(max_iter):
        jet = H.jet(t, q, p)
        residual = jet.H_p - v
        if np.max(np.abs(residual), initial=0.0) < tol:
            break
        p = p - np.linalg.solve(jet.H_pp, residual[..., None])[..., 0]
    else:
        raise LegendreError("Legendre solve failed for the inverse transform")
    return np.einsum("...i,...i->...", p, v) - H.value(t, q, p)

def magnetic_vector_field(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem,
                          t: Any, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """X_{H, delta sigma} at (t, q, p), returned as the concatenation (q', p')"""
    q, p = np.asarray(q, float), np.asarray(p, float)
    H_q, H_p = H.gradients(t, q, p)
    p_dot = -H_q
    if S.delta != 0.0:
        p_dot = p_dot + S.delta * np.einsum("...ij,...j->...i", S.sigma(q), H_p)
    return np.concatenate([H_p, p_dot], axis=-1)

def field_jacobian(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem,
                   t: float, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Derivative of X_{H, delta sigma} with respect to (q, p), shape (2n, 2n)"""
    n = M.dim
    jet = H.jet(t, q, p)
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = jet.H_qp.T
    A[:n, n:] = jet.H_pp
    A[n:, :n] = -jet.H_qq
    A[n:, n:] = -jet.H_qp
    if S.delta != 0.0:
        Sigma = S.sigma(q)
        A[n:, :n] += S.delta * (np.einsum("kij,j->ik", S.sigma_derivs(q), jet.H_p) + Sigma @ jet.H_qp.T)
        A[n:, n:] += S.delta * Sigma @ jet.H_pp
    return A

@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    energy: Optional[np.ndarray] = None
    energy_drift: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 2

    @property
    def q(self) -> np.ndarray:
        return self.states[:, :self.dim]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, self.dim:]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_frame(self) -> pd.DataFrame:
        n = self.dim
        columns = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
        frame = pd.DataFrame(self.states, columns=columns)
        frame.insert(0, "t", self.times)
        return frame

    def save_csv(self, path: Any, every: int = 1) -> None:
        self.to_frame().iloc[::max(1, int(every))].to_csv(path, index=False, float_format="%.17g",
                                                          lineterminator="\n")

def _span(t_span: Any) -> Tuple[float, float]:
    if np.isscalar(t_span):
        return 0.0, float(t_span)
    t0, t1 = t_span
    return float(t0), float(t1)

def _steps(t0: float, t1: float, dt: float) -> Tuple[int, float]:
    if not dt > 0:
        raise ValueError("time step must be positive")
    count = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    return count, (t1 - t0) / count

def _rk4(field, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = field(t, y)
    k2 = field(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = field(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = field(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

def integrate(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem, z0: Sequence[float],
              t_span: Any, dt: float) -> Trajectory:
    """Fixed-step RK4 flow of X_{H, delta sigma}; the step is shrunk to land on t_span[1]"""
    n = M.dim
    t0, t1 = _span(t_span)
    count, h = _steps(t0, t1, dt)
    z = np.asarray(z0, dtype=float).copy()

    def field(t, y):
        return magnetic_vector_field(M, S, H, t, y[:n], y[n:])

    states = np.empty((count + 1, 2 * n))
    states[0] = z
    for step in range(count):
        z = _rk4(field, t0 + step * h, z, h)
        if not np.all(np.isfinite(z)):
            raise FlowError(f"non-finite state at step {step + 1}", step + 1)
        states[step + 1] = z
    times = t0 + h * np.arange(count + 1)
    energy = drift = None
    if H.is_autonomous:
        energy = H.value(times, states[:, :n], states[:, n:])
        drift = float(np.max(np.abs(energy - energy[0])))
        logger.debug("integrated %d steps, energy drift %.3e", count, drift)
    return Trajectory(times, states, energy, drift)

def linearized_flow(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem, z0: Sequence[float],
                    tau: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """End point and Jacobian of the time-tau map, RK4 on the augmented state (z, Phi)"""
    n = M.dim
    m = 2 * n
    count, h = _steps(0.0, float(tau), dt)

    def field(t, y):
        z = y[:m]
        Phi = y[m:].reshape(m, m)
        dz = magnetic_vector_field(M, S, H, t, z[:n], z[n:])
        dPhi = field_jacobian(M, S, H, t, z[:n], z[n:]) @ Phi
        return np.concatenate([dz, dPhi.ravel()])

    y = np.concatenate([np.asarray(z0, dtype=float), np.eye(m).ravel()])
    for step in range(count):
        y = _rk4(field, step * h, y, h)
        if not np.all(np.isfinite(y)):
            raise FlowError(f"non-finite state at step {step + 1}", step + 1)
    return y[:m], y[m:].reshape(m, m)

def monodromy(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem, z0: Sequence[float],
              tau: float, dt: float) -> np.ndarray:
    """Linearized period map d phi_tau at z0"""
    return linearized_flow(M, S, H, z0, tau, dt)[1]

def omega_matrix(S: MagneticSystem, q: np.ndarray) -> np.ndarray:
    """Matrix of the twisted form in the (q, p) frame: [[delta Sigma, -I], [I, 0]]"""
    n = S.dim
    Om = np.zeros((2 * n, 2 * n))
    Om[:n, :n] = S.delta * S.sigma(q)
    Om[:n, n:] = -np.eye(n)
    Om[n:, :n] = np.eye(n)
    return Om

def symplectic_defect(M: TorusManifold, S: MagneticSystem, z0: np.ndarray, z1: np.ndarray,
                      Phi: np.ndarray) -> float:
    """max |Phi^T Omega(z1) Phi - Omega(z0)|"""
    n = M.dim
    lhs = Phi.T @ omega_matrix(S, np.asarray(z1)[:n]) @ Phi
    return float(np.max(np.abs(lhs - omega_matrix(S, np.asarray(z0)[:n]))))

def eigenvalue_one_gap(Phi: np.ndarray) -> float:
    """Distance from 1 to the spectrum of the monodromy"""
    return float(np.min(np.abs(np.linalg.eigvals(Phi) - 1.0)))

def sample_field_bound(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem,
                       points: np.ndarray, radii: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0),
                       directions: int = 8, t: float = 0.0) -> float:
    """sup |X_{H, delta sigma}| / (1 + |p|^2) over sampled (q, p), lengths measured with g and g*"""
    n = M.dim
    angles = np.linspace(0.0, 2.0 * np.pi, directions, endpoint=False)
    dirs = np.zeros((directions, n))
    dirs[:, 0] = np.cos(angles)
    dirs[:, 1] = np.sin(angles)
    dirs = np.vstack([dirs, np.eye(n), -np.eye(n)])
    best = 0.0
    for r in radii:
        for d in dirs:
            p = np.broadcast_to(r * d, points.shape)
            X = magnetic_vector_field(M, S, H, t, points, p)
            size = np.sqrt(M.norm(X[:, :n], points) ** 2 + M.dual_norm(X[:, n:], points) ** 2)
            p_sq = M.dual_norm(p, points) ** 2
            best = max(best, float(np.max(size / (1.0 + p_sq))))
    return best

def crosscheck_orbit(M: TorusManifold, S: MagneticSystem, H: HamiltonianSystem, rec, dt: float,
                     margin: Optional[float] = None, closure_tol: float = 1e-6):
    """Integrate the Legendre lift of a variational orbit for one period and measure closure"""
    if margin is None:
        margin = settings.MONODROMY_MARGIN
    q = rec.loop
    precondition = rec.el_residual < CROSSCHECK_EL_TOL
    notes = rec.notes
    if not precondition:
        logger.warning("crosscheck on a loop with EL residual %.3e; closure will not be meaningful",
                       rec.el_residual)
        notes = notes + (f"crosscheck precondition failed: EL residual {rec.el_residual:.3e}",)
    q0 = q.samples[0]
    p0 = H.momentum(0.0, q0, q.node_velocities()[0])
    z0 = np.concatenate([q0, p0])
    z1, Phi = linearized_flow(M, S, H, z0, q.tau, dt)
    shift = np.concatenate([q.winding.astype(float), np.zeros(M.dim)])
    residual = float(np.linalg.norm(z1 - shift - z0))
    gap = eigenvalue_one_gap(Phi)
    nondegenerate = gap > margin and rec.nullity == 0
    consistent = precondition and residual < closure_tol
    if residual >= closure_tol:
        logger.warning("flow closure residual %.3e exceeds %.1e; loop flagged", residual, closure_tol)
    logger.info("crosscheck: closure %.3e, eigenvalue-1 gap %.3e", residual, gap)
    return replace(rec, flow_closure_residual=residual, nondegenerate=nondegenerate,
                   flow_consistent=consistent, monodromy=Phi,
                   crosscheck_precondition=precondition, notes=notes)
