import math
import numpy as np
import pytest
from geometry.builtins import area_form, build_form, build_manifold, exact_cosine_form
from geometry.magnetic import (antisymmetry_defect, closedness_defect, diameter, lorentz_force, lorentz_norm,
                               periodicity_defect, primitive_defect, rescale_into_R_sigma, tameness_defect)
from geometry.torus import conformal_sine_torus, flat_torus
from utils.errors import ConfigError, GeometryError
from utils.helpers import unit_grid

def test_flat_diameter_is_half_diagonal():
    assert diameter(flat_torus(np.eye(2))) == pytest.approx(math.sqrt(2) / 2)
    assert diameter(flat_torus(np.eye(3))) == pytest.approx(math.sqrt(3) / 2)

def test_sheared_diameter_matches_covering_radius():
    # hexagonal lattice: covering radius 1 / sqrt(3)
    gram = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert diameter(flat_torus(gram)) == pytest.approx(1.0 / math.sqrt(3), rel=5e-3)

def test_conformal_metric_is_periodic(rng):
    M = conformal_sine_torus(np.diag([1.0, 2.0]), 0.2)
    S = exact_cosine_form(2, (0, 1), 0.5)
    assert periodicity_defect(M, S, rng) < 1e-9

def test_metric_derivatives_match_differences(rng):
    M = conformal_sine_torus(np.diag([1.0, 2.0, 0.5]), 0.15)
    q = rng.uniform(0, 1, size=3)
    step = 1e-6
    dG = M.metric_derivs(q)
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        fd = (M.metric(q + e) - M.metric(q - e)) / (2 * step)
        np.testing.assert_allclose(dG[k], fd, atol=1e-7)

@pytest.mark.parametrize("dim", [2, 3])
def test_builtin_forms_are_closed_with_consistent_primitives(dim, rng):
    points = rng.uniform(-2, 2, size=(20, dim))
    for S in (area_form(dim, (0, 1), 1.3), exact_cosine_form(dim, (dim - 1, 0), 0.7)):
        assert antisymmetry_defect(S, points) == 0.0
        assert closedness_defect(S, points) < 1e-6
        assert primitive_defect(S, points) < 1e-6

def test_lorentz_norm_of_unit_area_form():
    assert lorentz_norm(flat_torus(np.eye(2)), area_form(2)) == pytest.approx(1.0)

def test_lorentz_norm_scales_with_metric():
    # |Y| = |c| / sqrt(det G) in two dimensions
    M = flat_torus(np.diag([4.0, 1.0]))
    assert lorentz_norm(M, area_form(2, strength=3.0)) == pytest.approx(1.5)

def test_rescaling_brings_lorentz_norm_to_one():
    M = flat_torus(np.eye(2))
    S = area_form(2, strength=3.0)
    upsilon, scaled = rescale_into_R_sigma(M, S)
    assert upsilon == pytest.approx(3.0)
    assert lorentz_norm(scaled, S) <= 1.0 + 1e-12

def test_rescaling_leaves_tame_metric_alone():
    M = flat_torus(np.eye(2))
    upsilon, same = rescale_into_R_sigma(M, area_form(2, strength=0.5))
    assert upsilon == 1.0
    assert same is M

def test_tameness_after_rescaling(rng):
    M = conformal_sine_torus(np.eye(2), 0.1)
    S = exact_cosine_form(2, (0, 1), 1.0)
    _, scaled = rescale_into_R_sigma(M, S, margin=0.01, level=4)
    for q in unit_grid(2, 3):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert tameness_defect(scaled, S, q, a, b) >= -1e-12

def test_build_manifold_rejects_mismatched_gram():
    with pytest.raises(ConfigError) as info:
        build_manifold("flat", 3, {"gram": [[1.0, 0.0], [0.0, 1.0]]})
    assert info.value.pointer == "/manifold/params/gram"
    with pytest.raises(ConfigError) as info:
        build_manifold("flat", 2, {"diag": [1.0, 2.0, 3.0]})
    assert info.value.pointer == "/manifold/params/diag"

def test_indefinite_metric_is_rejected():
    with pytest.raises(GeometryError, match="metric not positive definite"):
        flat_torus(np.diag([1.0, -1.0]))

def test_build_form_by_name():
    S = build_form("area", 3, {"plane": [0, 2], "strength": 2.0}, 0.5)
    assert S.delta == 0.5
    assert S.sigma(np.zeros((1, 3)))[0, 0, 2] == 2.0
    with pytest.raises(ConfigError, match="invalid plane"):
        build_form("area", 2, {"plane": [1, 1]}, 1.0)
    with pytest.raises(GeometryError):
        build_form("dipole", 2, {}, 1.0)

def test_matrix_form_needs_its_matrix():
    with pytest.raises(ConfigError) as info:
        build_form("matrix", 2, {}, 1.0)
    assert info.value.pointer == "/sigma/params/matrix"
    with pytest.raises(ConfigError, match="does not match dimension 3"):
        build_form("matrix", 3, {"matrix": [[0.0, 1.0], [-1.0, 0.0]]}, 1.0)
    S = build_form("matrix", 2, {"matrix": [[0.0, 2.0], [-2.0, 0.0]]}, 1.0)
    assert not S.has_primitive

@pytest.mark.parametrize("system", ["flat2", "curved2"])
def test_lorentz_force_defining_identity(system, request, rng):
    M, S, _ = request.getfixturevalue(system)
    q = rng.uniform(-1.0, 2.0, size=(10_000, 2))
    u = rng.normal(size=(10_000, 2))
    v = rng.normal(size=(10_000, 2))
    Y = lorentz_force(M, S, q)
    lhs = np.einsum("kij,kj,kil,kl->k", Y, u, M.metric(q), v)
    rhs = np.einsum("ki,kij,kj->k", u, S.sigma(q), v)
    scale = 1.0 + np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    assert np.max(np.abs(lhs - rhs) / scale) <= 1e-12

def test_lorentz_force_is_linear_in_the_form(rng):
    M = conformal_sine_torus(np.diag([1.0, 1.5]), 0.1)
    q = rng.uniform(0, 1, size=(200, 2))
    base = lorentz_force(M, exact_cosine_form(2, (0, 1), 1.0), q)
    for c in rng.uniform(-5.0, 5.0, size=5):
        np.testing.assert_allclose(lorentz_force(M, exact_cosine_form(2, (0, 1), c), q), c * base,
                                   rtol=1e-12, atol=1e-14)

@pytest.mark.parametrize("system", ["flat2", "curved2"])
def test_lorentz_norm_scales_inversely_with_the_metric(system, request, rng):
    M, S, _ = request.getfixturevalue(system)
    norm = lorentz_norm(M, S)
    for upsilon in rng.uniform(0.1, 10.0, size=5):
        assert lorentz_norm(M.scaled(upsilon), S) == pytest.approx(norm / upsilon, rel=1e-10)
