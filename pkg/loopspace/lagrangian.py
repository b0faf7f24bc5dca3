"""Lagrangians L(t, q, v) on tori with all first and second derivatives.

Built-in families:
  kinetic               L = 1/2 |v|_g^2 - V(t, q)
  kinetic_relativistic  L = 1/2 |v|_g^2 + eps (sqrt(1 + |v|_g^2) - 1) - V(t, q)
Both satisfy (L1) and (L2); the second one has no closed-form Legendre dual.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, NamedTuple
import numpy as np
from geometry.torus import TorusManifold
from utils.errors import ConstantsError
from utils.helpers import unit_grid

TWO_PI = 2.0 * np.pi

@dataclass(frozen=True, eq=False)
class Potential:
    name: str = "zero"
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def amplitude(self) -> float:
        return float(self.params.get("amplitude", 0.0))

    @property
    def is_autonomous(self) -> bool:
        return self.name != "cosine_time" or float(self.params.get("modulation", 0.0)) == 0.0

    @property
    def is_constant_in_q(self) -> bool:
        return self.name in ("zero", "constant") or self.amplitude == 0.0

    def _time_factor(self, t: np.ndarray) -> np.ndarray:
        if self.name != "cosine_time":
            return np.ones_like(t, dtype=float)
        period = float(self.params.get("period", 1.0))
        b = float(self.params.get("modulation", 0.5))
        return 1.0 + b * np.sin(TWO_PI * t / period)

    def value(self, t: Any, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        if self.name == "zero":
            return np.zeros(q.shape[:-1])
        if self.name == "constant":
            return np.full(q.shape[:-1], float(self.params.get("value", 0.0)))
        return self.amplitude * self._time_factor(t) * np.sum(np.cos(TWO_PI * q), axis=-1)

    def grad(self, t: Any, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        if self.is_constant_in_q:
            return np.zeros(q.shape)
        return (-TWO_PI * self.amplitude * self._time_factor(t))[..., None] * np.sin(TWO_PI * q)

    def hess(self, t: Any, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        n = q.shape[-1]
        if self.is_constant_in_q:
            return np.zeros(q.shape + (n,))
        diag = (-TWO_PI ** 2 * self.amplitude * self._time_factor(t))[..., None] * np.cos(TWO_PI * q)
        return diag[..., :, None] * np.eye(n)

    def bounds(self, dim: int, level: int = 3, time_samples: int = 8) -> tuple:
        """(min V, max V) sampled on the nested grid and one period of time"""
        if self.name == "zero":
            return 0.0, 0.0
        period = float(self.params.get("period", 1.0))
        q = unit_grid(dim, level)
        lo, hi = np.inf, -np.inf
        for t in period * np.arange(time_samples) / time_samples:
            values = self.value(t, q)
            if not np.all(np.isfinite(values)):
                raise ConstantsError("potential is unbounded on the verification grid")
            lo, hi = min(lo, float(np.min(values))), max(hi, float(np.max(values)))
        return lo, hi

POTENTIALS = ("zero", "constant", "cosine", "cosine_time")

def build_potential(name: str, params: Dict[str, Any]) -> Potential:
    """Build a built-in potential by name"""
    if name not in POTENTIALS:
        raise ValueError(f"unknown potential '{name}'")
    return Potential(name, dict(params))

class LagrangianJet(NamedTuple):
    L: np.ndarray
    L_q: np.ndarray
    L_v: np.ndarray
    L_qq: np.ndarray
    L_qv: np.ndarray   # [..., k, i] = d2L / dq_k dv_i
    L_vv: np.ndarray

KINETIC = "kinetic"
RELATIVISTIC = "kinetic_relativistic"

@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    manifold: TorusManifold
    potential: Potential = field(default_factory=Potential)
    family: str = KINETIC
    eps: float = 0.0

    def __post_init__(self):
        if self.family not in (KINETIC, RELATIVISTIC):
            raise ValueError(f"unknown Lagrangian family '{self.family}'")
        if self.eps < 0:
            raise ValueError("relativistic correction must be nonnegative")

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def is_autonomous(self) -> bool:
        return self.potential.is_autonomous

    @property
    def is_translation_invariant(self) -> bool:
        return self.manifold.is_flat and self.potential.is_constant_in_q

    @property
    def has_closed_form_dual(self) -> bool:
        return self.family == KINETIC or self.eps == 0.0

    def value(self, t: Any, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        q, v = np.asarray(q, float), np.asarray(v, float)
        G = self.manifold.metric(q)
        w = np.einsum("...i,...ij,...j->...", v, G, v)
        out = 0.5 * w - self.potential.value(t, q)
        if self.family == RELATIVISTIC:
            out = out + self.eps * (np.sqrt(1.0 + w) - 1.0)
        return out

    def grad_v(self, t: Any, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        q, v = np.asarray(q, float), np.asarray(v, float)
        Gv = np.einsum("...ij,...j->...i", self.manifold.metric(q), v)
        if self.family == RELATIVISTIC:
            s = np.sqrt(1.0 + np.einsum("...i,...i->...", v, Gv))
            Gv = Gv * (1.0 + self.eps / s)[..., None]
        return Gv

    def jet(self, t: Any, q: np.ndarray, v: np.ndarray) -> LagrangianJet:
        """Value and all first/second derivatives, batched over leading axes"""
        q, v = np.asarray(q, float), np.asarray(v, float)
        M = self.manifold
        G = M.metric(q)
        dG = M.metric_derivs(q)
        d2G = M.metric_second_derivs(q)
        Gv = np.einsum("...ij,...j->...i", G, v)
        w = np.einsum("...i,...i->...", v, Gv)
        dGv = np.einsum("...kij,...j->...ki", dG, v)          # (dG_k v)_i
        vdGv = np.einsum("...ki,...i->...k", dGv, v)           # v^T dG_k v
        vd2Gv = np.einsum("...klij,...i,...j->...kl", d2G, v, v)

        L = 0.5 * w - self.potential.value(t, q)
        L_q = 0.5 * vdGv - self.potential.grad(t, q)
        L_v = Gv
        L_vv = G
        L_qv = dGv
        L_qq = 0.5 * vd2Gv - self.potential.hess(t, q)
        if self.family == RELATIVISTIC and self.eps > 0.0:
            e = self.eps
            s = np.sqrt(1.0 + w)
            s1, s3 = (1.0 / s), (1.0 / s ** 3)
            L = L + e * (s - 1.0)
            L_q = L_q + e * vdGv * (0.5 * s1)[..., None]
            L_v = L_v + e * Gv * s1[..., None]
            L_vv = L_vv + e * (G * s1[..., None, None]
                               - np.einsum("...i,...j->...ij", Gv, Gv) * s3[..., None, None])
            L_qv = L_qv + e * (dGv * s1[..., None, None]
                               - 0.5 * np.einsum("...k,...i->...ki", vdGv, Gv) * s3[..., None, None])
            L_qq = L_qq + e * (0.5 * vd2Gv * s1[..., None, None]
                               - 0.25 * np.einsum("...k,...l->...kl", vdGv, vdGv) * s3[..., None, None])
        return LagrangianJet(L, L_q, L_v, L_qq, L_qv, L_vv)
