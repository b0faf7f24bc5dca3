from pathlib import Path
import numpy as np
import pytest
from geometry.builtins import area_form, exact_cosine_form
from geometry.torus import conformal_sine_torus, flat_torus
from loopspace.lagrangian import LagrangianSystem, Potential, RELATIVISTIC

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

@pytest.fixture
def scenarios_dir():
    return SCENARIOS

@pytest.fixture
def rng():
    return np.random.default_rng(12345)

@pytest.fixture
def flat2():
    """Unit square torus with the unit area form"""
    M = flat_torus(np.eye(2))
    S = area_form(2, (0, 1), 1.0, 1.0)
    return M, S, LagrangianSystem(M)

@pytest.fixture
def flat3():
    M = flat_torus(np.eye(3))
    S = area_form(3, (0, 1), 1.0, 1.0)
    return M, S, LagrangianSystem(M)

@pytest.fixture
def curved2():
    """Conformal metric, non-constant exact form and a cosine potential"""
    M = conformal_sine_torus(np.diag([1.0, 1.5]), 0.1)
    S = exact_cosine_form(2, (0, 1), 0.4, 0.7)
    L = LagrangianSystem(M, Potential("cosine", {"amplitude": 0.3}))
    return M, S, L

@pytest.fixture
def relativistic2():
    M = conformal_sine_torus(np.eye(2), 0.1)
    S = exact_cosine_form(2, (0, 1), 0.4, 0.5)
    L = LagrangianSystem(M, Potential("cosine", {"amplitude": 0.2}), RELATIVISTIC, 0.3)
    return M, S, L
