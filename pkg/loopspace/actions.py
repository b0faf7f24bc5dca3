"""Twisted action functionals on discrete loops and their first and second variations.

Discretization: edge j joins x_j and x_{j+1} (x_N = x_0 + alpha). The velocity on
the edge is (x_{j+1} - x_j) / h, and L and theta are evaluated at the edge midpoint
at time (j + 1/2) h. This is a composite midpoint rule; for a linear primitive the
magnetic action of a polygon is exact.

Gradients are returned as Riesz representatives: "L2" uses <a, b> = h sum a_j . b_j,
"W12" adds h sum Da_j . Db_j with the forward difference D, applied through the FFT.
"""
import logging
from functools import lru_cache
from typing import Sequence
import numpy as np
from geometry.torus import TorusManifold
from geometry.magnetic import MagneticSystem
from loopspace.discrete_loop import DiscreteLoop, CotangentLoop, MAX_STEP
from loopspace.lagrangian import LagrangianSystem
from utils.errors import ClassError
from utils.helpers import midpoint_grid

logger = logging.getLogger(__name__)

L2 = "L2"
W12 = "W12"
FLUX_TOL = 1e-8

def class_flux(M: TorusManifold, S: MagneticSystem, alpha: Sequence[int], resolution: int = 16) -> np.ndarray:
    """Flux of sigma through the tori sweeping the straight loop of class alpha along each e_j"""
    alpha = np.asarray(alpha, dtype=float)
    n = S.dim
    grid = midpoint_grid(2, resolution)  # (t, s) pairs
    fluxes = np.zeros(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        points = grid[:, :1] * alpha + grid[:, 1:] * e
        # a_sigma(xi) = sigma(q', xi) with q' = alpha and xi = e_j
        Sig = S.sigma(points)
        fluxes[j] = float(np.mean(np.einsum("i,pij,j->p", alpha, Sig, e)))
    return fluxes

@lru_cache(maxsize=256)
def _cached_atoroidal(M: TorusManifold, S: MagneticSystem, alpha: tuple, resolution: int) -> bool:
    fluxes = class_flux(M, S, alpha, resolution)
    return bool(np.all(np.abs(fluxes) < FLUX_TOL))

def atoroidal_test(M: TorusManifold, S: MagneticSystem, alpha: Sequence[int], resolution: int = 16) -> bool:
    """True iff every sweep torus of the class alpha carries zero sigma-flux"""
    key = tuple(int(a) for a in np.asarray(alpha).ravel())
    if len(key) == 0:
        key = (0,) * S.dim
    return _cached_atoroidal(M, S, key, int(resolution))

def require_atoroidal(M: TorusManifold, S: MagneticSystem, alpha: Sequence[int]) -> None:
    if not atoroidal_test(M, S, alpha):
        raise ClassError("action_sigma gauge-dependent on this class")

def _check_manifold(M: TorusManifold, L: LagrangianSystem) -> None:
    if L.manifold is not M:
        raise ValueError("Lagrangian is defined over a different manifold")

def _guard(q: DiscreteLoop) -> None:
    if q.needs_refinement(MAX_STEP):
        raise ValueError(f"loop too coarse for derivatives (max step {q.max_step():.3g} > {MAX_STEP})")

def action_sigma(M: TorusManifold, S: MagneticSystem, q: DiscreteLoop, check_gauge: bool = False) -> float:
    """Magnetic action: int theta(q') dt along the lift, reference constant 0"""
    require_atoroidal(M, S, q.winding)
    q = q.ensure_resolution()
    value = _theta_integral(S, q)
    if check_gauge:
        for k in range(q.dim):
            e = np.zeros(q.dim)
            e[k] = 1.0
            shifted = _theta_integral(S, q.translate(e))
            if abs(shifted - value) > 1e-10 * (1.0 + abs(value)):
                raise ClassError(f"lift translation changed action_sigma by {shifted - value:.3e}")
    return value

def _theta_integral(S: MagneticSystem, q: DiscreteLoop) -> float:
    return float(np.sum(S.theta(q.midpoints()) * q.edges()))

def action_lagrangian(M: TorusManifold, L: LagrangianSystem, q: DiscreteLoop) -> float:
    """S_L(q) = int L(t, q, q') dt by the composite midpoint rule"""
    _check_manifold(M, L)
    q = q.ensure_resolution()
    values = L.value(q.edge_times(), q.midpoints(), q.velocities())
    return float(q.h * np.sum(values))

def action_total(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop) -> float:
    """S_{L, delta sigma}(q) = S_L(q) + delta A_sigma(q)"""
    value = action_lagrangian(M, L, q)
    if S.delta != 0.0:
        value += S.delta * action_sigma(M, S, q)
    return value

def action_hamiltonian(M: TorusManifold, S: MagneticSystem, H, x: CotangentLoop) -> float:
    """A_{H, delta sigma}(x) = int p dq - int H(t, q, p) dt + delta A_sigma(pi x)"""
    q = x.base
    p = x.edge_momenta()
    liouville = float(np.sum(p * q.edges()))
    energy = float(q.h * np.sum(H.value(q.edge_times(), q.midpoints(), p)))
    value = liouville - energy
    if S.delta != 0.0:
        require_atoroidal(M, S, q.winding)
        value += S.delta * _theta_integral(S, q)
    return value

def legendre_lift(M: TorusManifold, L: LagrangianSystem, q: DiscreteLoop) -> CotangentLoop:
    """Cotangent loop p_j = grad_v L(t_j, q_j, q'_j) with node-centred velocities"""
    _check_manifold(M, L)
    p = L.grad_v(q.node_times(), q.samples, q.node_velocities())
    return CotangentLoop(q, p)

def differential(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop) -> np.ndarray:
    """Partial derivatives dS/dx_j of the discrete action, shape (N, n)"""
    _check_manifold(M, L)
    _guard(q)
    h = q.h
    mid, vel = q.midpoints(), q.velocities()
    jet = L.jet(q.edge_times(), mid, vel)
    left = 0.5 * h * jet.L_q - jet.L_v
    right = 0.5 * h * jet.L_q + jet.L_v
    if S.delta != 0.0:
        require_atoroidal(M, S, q.winding)
        edges = q.edges()
        theta = S.theta(mid)
        half = 0.5 * np.einsum("eik,ei->ek", S.theta_jacobian(mid), edges)
        left = left + S.delta * (half - theta)
        right = right + S.delta * (half + theta)
    return left + np.roll(right, 1, axis=0)

def w12_symbol(N: int, h: float) -> np.ndarray:
    """Eigenvalues 1 + |2 sin(pi k / N) / h|^2 of the discrete W12 Gram operator"""
    k = np.arange(N)
    return 1.0 + (2.0 * np.sin(np.pi * k / N) / h) ** 2

def riesz(q: DiscreteLoop, covector: np.ndarray, inner: str = W12) -> np.ndarray:
    """Riesz representative of a discrete covector (dS/dx_j) for the chosen inner product"""
    l2 = covector / q.h
    if inner == L2:
        return l2
    if inner != W12:
        raise ValueError(f"unknown inner product '{inner}'")
    spectrum = np.fft.fft(l2, axis=0) / w12_symbol(q.N, q.h)[:, None]
    return np.real(np.fft.ifft(spectrum, axis=0))

def inner_product(q: DiscreteLoop, a: np.ndarray, b: np.ndarray, inner: str = L2) -> float:
    """Discrete L2 or W12 inner product of two variations of q"""
    value = q.h * float(np.sum(a * b))
    if inner == W12:
        da = (np.roll(a, -1, axis=0) - a) / q.h
        db = (np.roll(b, -1, axis=0) - b) / q.h
        value += q.h * float(np.sum(da * db))
    return value

def gradient(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop,
             inner: str = W12) -> np.ndarray:
    """Gradient of S_{L, delta sigma} at q for the L2 or W12 inner product, shape (N, n)"""
    return riesz(q, differential(M, S, L, q), inner)

def el_residual(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop) -> float:
    """Sup-norm of the discrete Euler-Lagrange defect (the L2 gradient)"""
    return float(np.max(np.abs(gradient(M, S, L, q, L2))))

def hessian(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop) -> np.ndarray:
    """Second variation of the discrete action in the L2 pairing, shape (nN, nN)"""
    _check_manifold(M, L)
    _guard(q)
    N, n, h = q.N, q.dim, q.h
    mid, vel = q.midpoints(), q.velocities()
    jet = L.jet(q.edge_times(), mid, vel)
    Lqq, Lqv, Lvv = jet.L_qq, jet.L_qv, jet.L_vv
    Lvq = np.swapaxes(Lqv, -1, -2)
    quarter = 0.25 * h * Lqq
    ll = quarter - 0.5 * (Lqv + Lvq) + Lvv / h
    lr = quarter + 0.5 * (Lqv - Lvq) - Lvv / h
    rr = quarter + 0.5 * (Lqv + Lvq) + Lvv / h
    if S.delta != 0.0:
        require_atoroidal(M, S, q.winding)
        J = S.theta_jacobian(mid)
        JT = np.swapaxes(J, -1, -2)
        K = np.einsum("ei,eikl->ekl", q.edges(), S.theta_hessian(mid))
        d = S.delta
        ll = ll + d * (0.25 * K - 0.5 * (J + JT))
        lr = lr + d * (0.25 * K + 0.5 * (JT - J))
        rr = rr + d * (0.25 * K + 0.5 * (J + JT))
    blocks = np.zeros((N, 2 * n, 2 * n))
    blocks[:, :n, :n] = ll
    blocks[:, :n, n:] = lr
    blocks[:, n:, :n] = np.swapaxes(lr, -1, -2)
    blocks[:, n:, n:] = rr
    edges = np.arange(N)
    idx = np.concatenate([edges[:, None] * n + np.arange(n),
                          ((edges[:, None] + 1) % N) * n + np.arange(n)], axis=1)
    H = np.zeros((N * n, N * n))
    np.add.at(H, (idx[:, :, None], idx[:, None, :]), blocks)
    return 0.5 * (H + H.T) / h

def hessian_vector(M: TorusManifold, S: MagneticSystem, L: LagrangianSystem, q: DiscreteLoop,
                   xi: np.ndarray) -> np.ndarray:
    """Hessian applied to a variation xi (N, n), returned with the same shape"""
    return (hessian(M, S, L, q) @ np.asarray(xi, dtype=float).ravel()).reshape(q.N, q.dim)
