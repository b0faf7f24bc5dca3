"""Loop persistence: CSV samples (t, x1..xn) with a JSON sidecar, plus plain polylines."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
import numpy as np
import pandas as pd
from loopspace.discrete_loop import DiscreteLoop
from utils.helpers import json_number

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")

def loop_frame(q: DiscreteLoop) -> pd.DataFrame:
    """Samples as a DataFrame with columns t, x1..xn"""
    frame = pd.DataFrame(q.samples, columns=[f"x{i + 1}" for i in range(q.dim)])
    frame.insert(0, "t", q.node_times())
    return frame

def save_loop(path: Any, q: DiscreteLoop, meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write the lift samples to CSV and tau, N, winding and meta to the sidecar"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    loop_frame(q).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    header = {"tau": q.tau, "N": q.N, "winding": q.winding.tolist()}
    header.update(meta or {})
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(json_number(header), fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.debug("saved loop with N=%d to %s", q.N, path)
    return path

def load_loop(path: Any) -> Tuple[DiscreteLoop, Dict[str, Any]]:
    """Read a loop written by save_loop; returns the loop and the sidecar metadata"""
    path = Path(path)
    frame = pd.read_csv(path)
    columns = [c for c in frame.columns if c.startswith("x")]
    if not columns:
        raise ValueError(f"{path} has no coordinate columns")
    meta: Dict[str, Any] = {}
    side = sidecar_path(path)
    if side.exists():
        with open(side, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    samples = frame[columns].to_numpy(dtype=float)
    winding = meta.get("winding") or [0] * len(columns)
    tau = meta.get("tau")
    if tau is None:
        # uniform times t_j = j tau / N
        t = frame["t"].to_numpy(dtype=float)
        tau = float(t[1] - t[0]) * len(t) if len(t) > 1 else 1.0
    return DiscreteLoop(samples, winding, float(tau)), meta

def save_polyline(path: Any, q: DiscreteLoop) -> Path:
    """One vertex per line, 't x1 ... xn', including the closing vertex at t = tau"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    times = np.append(q.node_times(), q.tau)
    rows = np.column_stack([times, q.closed_samples()])
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(" ".join(FLOAT_FORMAT % v for v in row) + "\n")
    return path
