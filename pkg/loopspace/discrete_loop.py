"""Discrete free loops on R^n / Z^n, stored as lifts to the universal cover.

A loop of N samples x_0..x_{N-1} with winding alpha closes through the rule
x_N := x_0 + alpha, so the projected loop is periodic by construction.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence
import numpy as np

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
MAX_STEP = 0.5

@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    samples: np.ndarray
    winding: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("loop samples must be an (N, n) array")
        winding = np.array(self.winding).ravel()
        if winding.size == 0:
            winding = np.zeros(samples.shape[1])
        if not np.all(np.equal(np.mod(winding, 1), 0)):
            raise ValueError("winding vector must be integral")
        winding = winding.astype(int)
        if winding.size != samples.shape[1]:
            raise ValueError("winding vector does not match the loop dimension")
        if samples.shape[0] < MIN_SAMPLES:
            raise ValueError(f"a discrete loop needs at least {MIN_SAMPLES} samples")
        if not self.tau > 0:
            raise ValueError("loop period must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("loop samples must be finite")
        samples.setflags(write=False)
        winding.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "winding", winding)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def h(self) -> float:
        """Time step tau / N"""
        return self.tau / self.N

    def closed_samples(self) -> np.ndarray:
        """x_0..x_N with x_N = x_0 + alpha"""
        return np.vstack([self.samples, self.samples[0] + self.winding])

    def edges(self) -> np.ndarray:
        """x_{j+1} - x_j for j = 0..N-1"""
        return np.diff(self.closed_samples(), axis=0)

    def midpoints(self) -> np.ndarray:
        """(x_j + x_{j+1}) / 2 for j = 0..N-1"""
        closed = self.closed_samples()
        return 0.5 * (closed[:-1] + closed[1:])

    def velocities(self) -> np.ndarray:
        """Edge-centred difference quotients (x_{j+1} - x_j) / h"""
        return self.edges() / self.h

    def node_velocities(self) -> np.ndarray:
        """Node-centred differences (x_{j+1} - x_{j-1}) / (2h)"""
        closed = self.closed_samples()
        previous = np.vstack([self.samples[-1:] - self.winding, self.samples[:-1]])
        return (closed[1:] - previous) / (2.0 * self.h)

    def node_times(self) -> np.ndarray:
        return self.h * np.arange(self.N)

    def edge_times(self) -> np.ndarray:
        return self.h * (np.arange(self.N) + 0.5)

    def max_step(self) -> float:
        """Largest edge in cover units"""
        return float(np.max(np.linalg.norm(self.edges(), axis=1)))

    def needs_refinement(self, max_step: float = MAX_STEP) -> bool:
        return self.max_step() > max_step

    def refine(self) -> "DiscreteLoop":
        """Nodal subdivision: insert edge midpoints, doubling N"""
        refined = np.empty((2 * self.N, self.dim))
        refined[0::2] = self.samples
        refined[1::2] = self.midpoints()
        return DiscreteLoop(refined, self.winding, self.tau)

    def ensure_resolution(self, max_step: float = MAX_STEP, max_doublings: int = 12) -> "DiscreteLoop":
        """Refine until every edge is at most max_step long"""
        loop = self
        for _ in range(max_doublings):
            if not loop.needs_refinement(max_step):
                return loop
            loop = loop.refine()
        logger.warning("loop still coarse after %d doublings (max step %.3g)", max_doublings, loop.max_step())
        return loop

    def with_samples(self, samples: np.ndarray) -> "DiscreteLoop":
        return DiscreteLoop(np.asarray(samples, dtype=float).reshape(self.N, self.dim), self.winding, self.tau)

    def translate(self, shift: Sequence[float]) -> "DiscreteLoop":
        """Translate the lift by a cover vector (a lattice vector keeps the projected loop)"""
        return DiscreteLoop(self.samples + np.asarray(shift, dtype=float), self.winding, self.tau)

    def time_shift(self, steps: int) -> "DiscreteLoop":
        """Start the loop `steps` samples later, keeping the lift continuous"""
        s = int(steps) % self.N
        if s == 0:
            return self
        head = self.samples[s:]
        tail = self.samples[:s] + self.winding
        return DiscreteLoop(np.vstack([head, tail]), self.winding, self.tau)

    def velocity_l2_sq(self) -> float:
        """||q'||^2_{L^2} = h sum |v_j|^2 in cover coordinates"""
        edges = self.edges()
        return float(np.sum(edges * edges) / self.h)

    def length(self, M=None) -> float:
        """Length int |q'| dt, measured with the metric of M when given"""
        edges = self.edges()
        if M is None:
            return float(np.sum(np.linalg.norm(edges, axis=1)))
        return float(np.sum(M.norm(edges, self.midpoints())))

    def cover_diameter(self) -> float:
        """Largest distance between two samples of the lift"""
        diff = self.samples[:, None, :] - self.samples[None, :, :]
        return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))

    def mean(self) -> np.ndarray:
        return np.mean(self.samples, axis=0)

    @classmethod
    def constant(cls, point: Sequence[float], N: int, tau: float = 1.0) -> "DiscreteLoop":
        point = np.asarray(point, dtype=float)
        return cls(np.tile(point, (N, 1)), np.zeros(point.size, dtype=int), tau)

    @classmethod
    def straight_line(cls, winding: Sequence[int], N: int, tau: float = 1.0,
                      base: Optional[Sequence[float]] = None) -> "DiscreteLoop":
        """t -> base + alpha t / tau sampled at t_j = j h"""
        alpha = np.asarray(winding, dtype=float)
        base = np.zeros(alpha.size) if base is None else np.asarray(base, dtype=float)
        fractions = np.arange(N)[:, None] / N
        return cls(base + fractions * alpha, alpha.astype(int), tau)

    @classmethod
    def circle(cls, center: Sequence[float], radius: float, N: int, tau: float = 1.0,
               turns: int = 1, clockwise: bool = False, plane: tuple = (0, 1)) -> "DiscreteLoop":
        """Contractible circle in the given coordinate plane, traversed `turns` times"""
        center = np.asarray(center, dtype=float)
        angle = 2.0 * np.pi * turns * np.arange(N) / N
        sign = -1.0 if clockwise else 1.0
        samples = np.tile(center, (N, 1))
        samples[:, plane[0]] += radius * np.cos(angle)
        samples[:, plane[1]] += sign * radius * np.sin(angle)
        return cls(samples, np.zeros(center.size, dtype=int), tau)

    @classmethod
    def random_fourier(cls, winding: Sequence[int], N: int, tau: float, rng: np.random.Generator,
                       modes: int = 3, amplitude: float = 0.2,
                       base: Optional[Sequence[float]] = None) -> "DiscreteLoop":
        """Straight-line representative of the class plus a random truncated Fourier series"""
        alpha = np.asarray(winding, dtype=float)
        dim = alpha.size
        if base is None:
            base = rng.uniform(0.0, 1.0, size=dim)
        s = np.arange(N) / N
        samples = np.asarray(base, dtype=float) + s[:, None] * alpha
        for k in range(1, modes + 1):
            a = rng.uniform(-amplitude, amplitude, size=dim)
            b = rng.uniform(-amplitude, amplitude, size=dim)
            samples += np.outer(np.cos(2.0 * np.pi * k * s), a) + np.outer(np.sin(2.0 * np.pi * k * s), b)
        return cls(samples, alpha.astype(int), tau).ensure_resolution()

@dataclass(frozen=True, eq=False)
class CotangentLoop:
    base: DiscreteLoop
    momenta: np.ndarray

    def __post_init__(self):
        momenta = np.array(self.momenta, dtype=float)
        if momenta.shape != self.base.samples.shape:
            raise ValueError("momenta must match the base loop samples")
        if not np.all(np.isfinite(momenta)):
            raise ValueError("momenta must be finite")
        momenta.setflags(write=False)
        object.__setattr__(self, "momenta", momenta)

    def edge_momenta(self) -> np.ndarray:
        """Momenta averaged onto edge midpoints (periodic in the fiber)"""
        return 0.5 * (self.momenta + np.roll(self.momenta, -1, axis=0))
