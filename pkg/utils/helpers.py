import math
import itertools
from typing import Any, List, Sequence
import numpy as np

def unit_grid(dim: int, level: int) -> np.ndarray:
    """Nested sample grid of the unit cell: (2**level)**dim points j / 2**level"""
    per_axis = 2 ** max(0, int(level))
    axis = np.arange(per_axis) / per_axis
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)

def midpoint_grid(dim: int, per_axis: int) -> np.ndarray:
    """Cell-centred grid of the unit cube with per_axis points on each axis"""
    axis = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)

def sphere_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic unit vectors: the coordinate axes plus a quasi-uniform spread"""
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        spread = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    elif dim == 3:
        # Fibonacci lattice on S^2
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = np.pi * (1.0 + math.sqrt(5.0)) * k
        spread = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    else:
        rng = np.random.default_rng(0)
        spread = rng.normal(size=(count, dim))
        spread /= np.linalg.norm(spread, axis=1, keepdims=True)
    return np.vstack([axes, spread])

def lattice_neighbours(dim: int, reach: int = 1) -> np.ndarray:
    """Integer vectors with entries in [-reach, reach + 1]"""
    values = range(-reach, reach + 2)
    return np.array(list(itertools.product(values, repeat=dim)), dtype=float)

def winding_vectors(dim: int, max_winding: int) -> List[tuple]:
    """All integer vectors with entries in [-max_winding, max_winding]"""
    values = range(-max_winding, max_winding + 1)
    return list(itertools.product(values, repeat=dim))

def json_number(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-ready values, floats at full precision"""
    if isinstance(value, np.ndarray):
        return [json_number(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [json_number(v) for v in value]
    if isinstance(value, dict):
        return {str(k): json_number(v) for k, v in value.items()}
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    return value

def format_duration(seconds: float) -> str:
    """Format duration in seconds to readable format"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"

def key_pointer(location: Sequence[Any]) -> str:
    """Render a pydantic error location as a JSON pointer"""
    return "/" + "/".join(str(part) for part in location)
