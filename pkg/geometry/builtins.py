"""Named metrics and magnetic forms selectable from scenario configs."""
from typing import Any, Dict, Optional
import numpy as np
from geometry.torus import TorusManifold, flat_torus, conformal_sine_torus
from geometry.magnetic import MagneticSystem, BOUNDED, LINEAR, NONE
from utils.errors import ConfigError, GeometryError

def _pair(params: Dict[str, Any], dim: int) -> tuple:
    i, j = params.get("plane", [0, 1])
    i, j = int(i), int(j)
    if not (0 <= i < dim and 0 <= j < dim) or i == j:
        raise ConfigError(f"invalid plane ({i}, {j}) for dimension {dim}", "/sigma/params/plane")
    return i, j

def area_form(dim: int, plane: tuple = (0, 1), strength: float = 1.0, delta: float = 1.0) -> MagneticSystem:
    """sigma = c dq_i ^ dq_j with the linear primitive theta = c q_i dq_j"""
    i, j = plane
    c = float(strength)
    Sigma = np.zeros((dim, dim))
    Sigma[i, j] = c
    Sigma[j, i] = -c
    J = np.zeros((dim, dim))
    J[j, i] = c

    def sigma_fn(q):
        return np.broadcast_to(Sigma, q.shape[:-1] + (dim, dim)).copy()

    def theta_fn(q):
        out = np.zeros(q.shape)
        out[..., j] = c * q[..., i]
        return out

    def theta_jac_fn(q):
        return np.broadcast_to(J, q.shape[:-1] + (dim, dim)).copy()

    def theta_hess_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim, dim))

    def sigma_deriv_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim, dim))

    def envelope(M: TorusManifold, z: np.ndarray) -> Optional[float]:
        # |theta_q| = |c| |q_i| |dq_j|_{g*} and |q_i - z_i| <= |dq_i|_{g*} r on B(z, r)
        if not M.is_flat:
            return None
        Ginv = np.linalg.inv(M.gram)
        reach_i = np.sqrt(Ginv[i, i])
        return abs(c) * np.sqrt(Ginv[j, j]) * max(abs(z[i]), reach_i)

    return MagneticSystem(dim, sigma_fn, theta_fn, theta_jac_fn, theta_hess_fn, sigma_deriv_fn,
                          LINEAR if c != 0.0 else BOUNDED, float(delta), "area",
                          {"plane": [i, j], "strength": c}, envelope, True)

def exact_cosine_form(dim: int, plane: tuple = (0, 1), strength: float = 1.0,
                      delta: float = 1.0) -> MagneticSystem:
    """sigma = d(c cos(2 pi q_i) dq_j): exact on the torus, bounded primitive"""
    i, j = plane
    c = float(strength)
    two_pi = 2.0 * np.pi

    def sigma_fn(q):
        out = np.zeros(q.shape[:-1] + (dim, dim))
        value = -two_pi * c * np.sin(two_pi * q[..., i])
        out[..., i, j] = value
        out[..., j, i] = -value
        return out

    def sigma_deriv_fn(q):
        out = np.zeros(q.shape[:-1] + (dim, dim, dim))
        value = -two_pi ** 2 * c * np.cos(two_pi * q[..., i])
        out[..., i, i, j] = value
        out[..., i, j, i] = -value
        return out

    def theta_fn(q):
        out = np.zeros(q.shape)
        out[..., j] = c * np.cos(two_pi * q[..., i])
        return out

    def theta_jac_fn(q):
        out = np.zeros(q.shape[:-1] + (dim, dim))
        out[..., j, i] = -two_pi * c * np.sin(two_pi * q[..., i])
        return out

    def theta_hess_fn(q):
        out = np.zeros(q.shape[:-1] + (dim, dim, dim))
        out[..., j, i, i] = -two_pi ** 2 * c * np.cos(two_pi * q[..., i])
        return out

    def envelope(M: TorusManifold, z: np.ndarray) -> Optional[float]:
        if not M.is_flat:
            return None
        Ginv = np.linalg.inv(M.gram)
        return abs(c) * np.sqrt(Ginv[j, j])

    return MagneticSystem(dim, sigma_fn, theta_fn, theta_jac_fn, theta_hess_fn, sigma_deriv_fn,
                          BOUNDED, float(delta), "exact_cosine",
                          {"plane": [i, j], "strength": c}, envelope, False)

def zero_form(dim: int, delta: float = 1.0) -> MagneticSystem:
    """sigma = 0 with the zero primitive"""

    def sigma_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim))

    def theta_fn(q):
        return np.zeros(q.shape)

    def theta_jac_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim))

    def theta_hess_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim, dim))

    def sigma_deriv_fn(q):
        return np.zeros(q.shape[:-1] + (dim, dim, dim))

    return MagneticSystem(dim, sigma_fn, theta_fn, theta_jac_fn, theta_hess_fn, sigma_deriv_fn,
                          BOUNDED, float(delta), "zero", {}, lambda M, z: 0.0, True)

def closed_form_without_primitive(dim: int, Sigma: Any, delta: float = 1.0) -> MagneticSystem:
    """Constant-coefficient form given only by its matrix (growth class none)"""
    Sigma = np.asarray(Sigma, dtype=float)

    def sigma_fn(q):
        return np.broadcast_to(Sigma, q.shape[:-1] + (dim, dim)).copy()

    return MagneticSystem(dim, sigma_fn, growth_class=NONE, delta=float(delta),
                          name="matrix", params={"matrix": Sigma.tolist()}, constant_coefficients=True)

METRICS = ("flat", "conformal_sine")
FORMS = ("area", "exact_cosine", "zero", "matrix")

def build_manifold(name: str, dim: int, params: Dict[str, Any]) -> TorusManifold:
    """Build a built-in metric by name"""
    gram = params.get("gram")
    if gram is None:
        gram = params.get("diag", [1.0] * dim)
    gram = np.asarray(gram, dtype=float)
    if gram.ndim == 1 and gram.size != dim or gram.ndim == 2 and gram.shape != (dim, dim):
        raise ConfigError(f"gram matrix does not match dimension {dim}",
                          "/manifold/params/" + ("gram" if "gram" in params else "diag"))
    if name == "flat":
        return flat_torus(gram)
    if name == "conformal_sine":
        return conformal_sine_torus(gram, float(params.get("amplitude", 0.1)))
    raise GeometryError(f"unknown metric '{name}'")

def build_form(name: str, dim: int, params: Dict[str, Any], delta: float) -> MagneticSystem:
    """Build a built-in magnetic form by name"""
    strength = float(params.get("strength", 1.0))
    if name == "area":
        return area_form(dim, _pair(params, dim), strength, delta)
    if name == "exact_cosine":
        return exact_cosine_form(dim, _pair(params, dim), strength, delta)
    if name == "zero":
        return zero_form(dim, delta)
    if name == "matrix":
        if "matrix" not in params:
            raise ConfigError("form 'matrix' needs params.matrix", "/sigma/params/matrix")
        Sigma = np.asarray(params["matrix"], dtype=float)
        if Sigma.shape != (dim, dim):
            raise ConfigError(f"sigma matrix does not match dimension {dim}", "/sigma/params/matrix")
        return closed_form_without_primitive(dim, Sigma, delta)
    raise GeometryError(f"unknown magnetic form '{name}'")
