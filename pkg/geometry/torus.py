"""Flat and conformally flat tori R^n / Z^n with periodic Riemannian metrics.

Points are always given in universal-cover coordinates. Periodic coefficients
reduce their argument modulo Z^n internally, so winding information carried by
the caller is never destroyed.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional
import numpy as np
from utils.errors import GeometryError

logger = logging.getLogger(__name__)

FLAT = "flat"
CONFORMAL = "conformal"
GENERAL = "general"

ArrayFn = Callable[[np.ndarray], np.ndarray]

@dataclass(frozen=True, eq=False)
class TorusManifold:
    dim: int
    gram: np.ndarray
    kind: str = FLAT
    name: str = "flat"
    params: Dict[str, Any] = field(default_factory=dict)
    # conformal factor G(q) = exp(2 f(q)) * gram
    f: Optional[ArrayFn] = None
    grad_f: Optional[ArrayFn] = None
    hess_f: Optional[ArrayFn] = None
    # general metrics: single-point callbacks
    metric_fn: Optional[ArrayFn] = None
    metric_deriv_fn: Optional[ArrayFn] = None
    metric_second_fn: Optional[ArrayFn] = None

    def __post_init__(self):
        if self.dim < 2:
            raise GeometryError("torus dimension must be at least 2")
        gram = np.array(self.gram, dtype=float).reshape(self.dim, self.dim)
        gram = 0.5 * (gram + gram.T)
        gram.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        if self.kind not in (FLAT, CONFORMAL, GENERAL):
            raise GeometryError(f"unknown metric kind '{self.kind}'")
        if self.kind == CONFORMAL and (self.f is None or self.grad_f is None or self.hess_f is None):
            raise GeometryError("conformal metrics need f, grad_f and hess_f")
        if self.kind == GENERAL and (self.metric_fn is None or self.metric_deriv_fn is None):
            raise GeometryError("general metrics need metric and derivative callbacks")
        if self.kind != GENERAL:
            try:
                np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                raise GeometryError("metric not positive definite")

    @property
    def is_flat(self) -> bool:
        """Check if the metric has constant coefficients"""
        return self.kind == FLAT

    @staticmethod
    def reduce(q: np.ndarray) -> np.ndarray:
        """Reduce cover coordinates to the fundamental cell [0, 1)^n"""
        return np.mod(q, 1.0)

    def metric(self, q: np.ndarray) -> np.ndarray:
        """Gram matrix G(q); accepts a point (n,) or a batch (..., n)"""
        q = np.asarray(q, dtype=float)
        if self.kind == FLAT:
            return np.broadcast_to(self.gram, q.shape[:-1] + (self.dim, self.dim)).copy()
        if self.kind == CONFORMAL:
            scale = np.exp(2.0 * self.f(self.reduce(q)))
            return scale[..., None, None] * self.gram
        return self._general_batch(self.metric_fn, q, (self.dim, self.dim))

    def metric_derivs(self, q: np.ndarray) -> np.ndarray:
        """dG/dq_k stacked as [..., k, i, j]"""
        q = np.asarray(q, dtype=float)
        n = self.dim
        if self.kind == FLAT:
            return np.zeros(q.shape[:-1] + (n, n, n))
        if self.kind == CONFORMAL:
            qr = self.reduce(q)
            scale = np.exp(2.0 * self.f(qr))
            grad = self.grad_f(qr)
            return 2.0 * (grad * scale[..., None])[..., :, None, None] * self.gram
        return self._general_batch(self.metric_deriv_fn, q, (n, n, n))

    def metric_second_derivs(self, q: np.ndarray) -> np.ndarray:
        """d2G/dq_k dq_l stacked as [..., k, l, i, j]"""
        q = np.asarray(q, dtype=float)
        n = self.dim
        if self.kind == FLAT:
            return np.zeros(q.shape[:-1] + (n, n, n, n))
        if self.kind == CONFORMAL:
            qr = self.reduce(q)
            scale = np.exp(2.0 * self.f(qr))
            grad = self.grad_f(qr)
            hess = self.hess_f(qr)
            coeff = 4.0 * grad[..., :, None] * grad[..., None, :] + 2.0 * hess
            return (coeff * scale[..., None, None])[..., :, :, None, None] * self.gram
        if self.metric_second_fn is None:
            return self._second_by_differences(q)
        return self._general_batch(self.metric_second_fn, q, (n, n, n, n))

    def inverse_metric(self, q: np.ndarray) -> np.ndarray:
        """G(q)^-1, raising when G(q) is not positive definite"""
        G = self.metric(q)
        self.assert_positive_definite(G)
        return np.linalg.inv(G)

    def assert_positive_definite(self, G: np.ndarray) -> None:
        """Raise GeometryError unless every matrix in the batch is SPD"""
        eig = np.linalg.eigvalsh(G)
        if not np.all(np.isfinite(eig)) or np.min(eig) <= 0.0:
            raise GeometryError("metric not positive definite")

    def norm(self, u: np.ndarray, q: np.ndarray) -> np.ndarray:
        """|u|_g at q (batched along leading axes)"""
        G = self.metric(q)
        return np.sqrt(np.einsum("...i,...ij,...j->...", u, G, u))

    def dual_norm(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """|p|_{g*} of a covector at q"""
        Ginv = self.inverse_metric(q)
        return np.sqrt(np.einsum("...i,...ij,...j->...", p, Ginv, p))

    def scaled(self, upsilon: float) -> "TorusManifold":
        """Same torus with metric upsilon * G"""
        if upsilon <= 0:
            raise GeometryError("metric scale must be positive")
        params = dict(self.params, scale=self.params.get("scale", 1.0) * upsilon)
        if self.kind != GENERAL:
            return TorusManifold(self.dim, upsilon * self.gram, self.kind, self.name, params,
                                 self.f, self.grad_f, self.hess_f)
        second = self.metric_second_fn
        return TorusManifold(
            self.dim, upsilon * self.gram, GENERAL, self.name, params,
            metric_fn=lambda q: upsilon * self.metric_fn(q),
            metric_deriv_fn=lambda q: upsilon * self.metric_deriv_fn(q),
            metric_second_fn=None if second is None else (lambda q: upsilon * second(q)),
        )

    def _general_batch(self, fn: ArrayFn, q: np.ndarray, shape: tuple) -> np.ndarray:
        flat = q.reshape(-1, self.dim)
        values = np.array([np.asarray(fn(self.reduce(x)), dtype=float).reshape(shape) for x in flat])
        return values.reshape(q.shape[:-1] + shape)

    def _second_by_differences(self, q: np.ndarray, step: float = 1e-5) -> np.ndarray:
        n = self.dim
        out = np.zeros(q.shape[:-1] + (n, n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = step
            d_plus = self.metric_derivs(q + e)
            d_minus = self.metric_derivs(q - e)
            out[..., :, l, :, :] = (d_plus - d_minus) / (2.0 * step)
        return out

def flat_torus(gram: Any, name: str = "flat") -> TorusManifold:
    """Flat torus with the given Gram matrix (a diagonal list is accepted)"""
    gram = np.asarray(gram, dtype=float)
    if gram.ndim == 1:
        gram = np.diag(gram)
    return TorusManifold(gram.shape[0], gram, FLAT, name, {"gram": gram.tolist()})

def conformal_sine_torus(gram: Any, amplitude: float, name: str = "conformal_sine") -> TorusManifold:
    """Conformally flat torus with f(q) = a * sum_k sin(2 pi q_k)"""
    gram = np.asarray(gram, dtype=float)
    if gram.ndim == 1:
        gram = np.diag(gram)
    two_pi = 2.0 * np.pi
    a = float(amplitude)

    def f(q):
        return a * np.sum(np.sin(two_pi * q), axis=-1)

    def grad_f(q):
        return two_pi * a * np.cos(two_pi * q)

    def hess_f(q):
        diag = -two_pi ** 2 * a * np.sin(two_pi * q)
        return diag[..., :, None] * np.eye(q.shape[-1])

    return TorusManifold(gram.shape[0], gram, CONFORMAL, name,
                         {"gram": gram.tolist(), "amplitude": a}, f, grad_f, hess_f)
