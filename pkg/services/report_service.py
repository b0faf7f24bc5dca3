"""Report emission: JSON reports, CSV tables, loop and trajectory files."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import pandas as pd
from loopspace.discrete_loop import DiscreteLoop
from loopspace.loop_io import save_loop, save_polyline
from utils.helpers import json_number

logger = logging.getLogger(__name__)

def assertion(name: str, passed: bool, detail: Any = None) -> Dict[str, Any]:
    """Named machine-readable check"""
    return {"name": name, "passed": bool(passed), "detail": detail}

class ReportService:
    def __init__(self, directory: Any, name: str, formats: Sequence[str] = ("json", "csv", "poly")):
        self.directory = Path(directory)
        self.name = name
        self.formats = set(formats)
        self.written: List[str] = []

    def _path(self, suffix: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / f"{self.name}{suffix}"

    def write_json(self, report: Dict[str, Any]) -> Optional[Path]:
        """Report JSON with floats at full round-trip precision"""
        if "json" not in self.formats:
            return None
        path = self._path(".json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(json_number(report), f, indent=2, sort_keys=True)
            f.write("\n")
        self.written.append(str(path))
        logger.info("wrote report %s", path)
        return path

    def write_table(self, label: str, rows: List[Dict[str, Any]]) -> Optional[Path]:
        if "csv" not in self.formats or not rows:
            return None
        path = self._path(f"_{label}.csv")
        pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        self.written.append(str(path))
        return path

    def write_loop(self, label: str, q: DiscreteLoop, meta: Optional[Dict[str, Any]] = None) -> None:
        if "csv" in self.formats:
            path = save_loop(self._path(f"_{label}.csv"), q, meta)
            self.written.append(str(path))
        if "poly" in self.formats:
            path = save_polyline(self._path(f"_{label}.poly"), q)
            self.written.append(str(path))

    def write_trajectory(self, label: str, trajectory, every: int = 1) -> Optional[Path]:
        if "csv" not in self.formats:
            return None
        path = self._path(f"_{label}.csv")
        trajectory.save_csv(path, every)
        self.written.append(str(path))
        return path

def summarize(assertions: List[Dict[str, Any]]) -> Dict[str, Any]:
    failed = [a["name"] for a in assertions if not a["passed"]]
    return {"passed": not failed, "failed": failed, "count": len(assertions)}
