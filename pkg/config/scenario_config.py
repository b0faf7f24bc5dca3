"""Scenario configuration: pydantic models, JSON loading and the published schema."""
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from services.variational_solver import SolverParams
from utils.errors import ConfigError
from utils.helpers import key_pointer
from config.settings import settings

SCHEMA_PATH = Path(__file__).with_name("scenario_schema.json")

SCENARIOS = ("orbits", "constants", "isoperimetric", "flow", "index_sweep", "full_report")

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

class ManifoldConfig(_Strict):
    dim: int = Field(default=2, ge=2, le=6)
    metric: Literal["flat", "conformal_sine"] = "flat"
    params: Dict[str, Any] = Field(default_factory=dict)
    rescale: bool = False

class SigmaConfig(_Strict):
    form: Literal["area", "exact_cosine", "zero", "matrix"] = "area"
    params: Dict[str, Any] = Field(default_factory=dict)
    delta: float = 1.0
    primitive: Literal["analytic", "sampled"] = "analytic"

class SystemConfig(_Strict):
    family: Literal["kinetic", "kinetic_relativistic"] = "kinetic"
    eps: float = Field(default=0.0, ge=0.0)
    potential: Literal["zero", "constant", "cosine", "cosine_time"] = "zero"
    potential_params: Dict[str, Any] = Field(default_factory=dict)
    tau: float = Field(default=1.0, gt=0.0)

class SweepConfig(_Strict):
    deltas: List[float] = Field(default_factory=lambda: [5.0, 6.0, 6.2, 6.4, 7.0])
    N_values: List[int] = Field(default_factory=lambda: [128])

    @field_validator("N_values")
    @classmethod
    def _enough_samples(cls, values: List[int]) -> List[int]:
        if any(n < 8 for n in values):
            raise ValueError("loops need at least 8 samples")
        return values

class FlowConfig(_Strict):
    deltas: Optional[List[float]] = None
    dt: float = Field(default=1e-4, gt=0.0)
    speed: float = Field(default=1.0, gt=0.0)
    t_final: Optional[float] = Field(default=None, gt=0.0)
    closure_tol: float = Field(default=1e-6, gt=0.0)
    monodromy_dt: float = Field(default=2e-3, gt=0.0)
    crosscheck: bool = True
    crosscheck_dt: float = Field(default=1e-3, gt=0.0)
    trajectory_every: int = Field(default=100, ge=1)

class IsoperimetricConfig(_Strict):
    samples: int = Field(default=1000, ge=1)
    max_modes: int = Field(default=5, ge=1)
    max_amplitude: float = Field(default=0.5, gt=0.0)

class OutputConfig(_Strict):
    directory: str = settings.OUTPUT_DIR
    name: Optional[str] = None
    formats: List[Literal["json", "csv", "poly"]] = Field(default_factory=lambda: ["json", "csv", "poly"])

class ScenarioConfig(_Strict):
    scenario: Literal["orbits", "constants", "isoperimetric", "flow", "index_sweep", "full_report"]
    manifold: ManifoldConfig = Field(default_factory=ManifoldConfig)
    sigma: SigmaConfig = Field(default_factory=SigmaConfig)
    system: SystemConfig = Field(default_factory=SystemConfig)
    winding: List[int] = Field(default_factory=list, alias="class")
    resolution: int = Field(default=settings.DEFAULT_RESOLUTION, ge=8)
    solver: SolverParams = Field(default_factory=SolverParams)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    flow: FlowConfig = Field(default_factory=FlowConfig)
    isoperimetric: IsoperimetricConfig = Field(default_factory=IsoperimetricConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    expect: Dict[str, Any] = Field(default_factory=dict)
    expect_tol: float = Field(default=1e-9, gt=0.0)

    @property
    def alpha(self) -> List[int]:
        """Winding vector, alpha = 0 when the class is left empty"""
        return list(self.winding) if self.winding else [0] * self.manifold.dim

def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate a JSON scenario document"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        pointer = key_pointer(first["loc"])
        details = "; ".join(f"{key_pointer(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{source}: schema violation: {details}", pointer)

def load_config(path: Any) -> ScenarioConfig:
    """Load a scenario file"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})")
    return parse_config(text, str(path))

def schema() -> Dict[str, Any]:
    return ScenarioConfig.model_json_schema(by_alias=True)

def write_schema(path: Any = SCHEMA_PATH) -> Path:
    """Regenerate the published schema file from the models"""
    path = Path(path)
    path.write_text(json.dumps(schema(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
