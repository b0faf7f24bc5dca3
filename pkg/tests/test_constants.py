import math
from dataclasses import replace
import numpy as np
import pytest
from geometry.builtins import exact_cosine_form
from geometry.torus import flat_torus
from loopspace.lagrangian import Potential
from services.constants_service import (atoroidal_classes, coercivity_bound, constants_report, delta0,
                                        delta_lagrangian, growth_constants_kinetic, isoperimetric_constants,
                                        predicted_constant_index, torus_window, verify_growth)
from services.hamiltonian_flow import fenchel_dual
from utils.errors import ClassError

T2_C0 = 2.0 + math.sqrt(2.0) / 2.0
T2_DELTA0 = 1.0 / (8.0 + 2.0 * math.sqrt(2.0))

def test_t2_isoperimetric_goldens(flat2):
    M, S, _ = flat2
    iso = isoperimetric_constants(M, S, [0, 0])
    assert iso.Theta == pytest.approx(1.0)
    assert iso.C0 == pytest.approx(2.70711, abs=1e-5)
    assert iso.C1 == pytest.approx(4.12132, abs=1e-5)
    assert iso.ell_alpha == 0.0

def test_t3_isoperimetric_goldens(flat3):
    M, S, _ = flat3
    iso = isoperimetric_constants(M, S, [0, 0, 1])
    assert iso.C0 == pytest.approx(2.86603, abs=1e-5)
    assert iso.C1 == pytest.approx(7.9641016, abs=1e-6)
    assert iso.ell_alpha == pytest.approx(1.0)

def test_sampled_primitive_bound_stays_below_the_envelope(flat2):
    M, S, _ = flat2
    sampled = isoperimetric_constants(M, replace(S, theta_envelope=None), [0, 0])
    # |theta| <= r on B(0, r), so the sampled constant is r_max / (r_max + 1)
    assert sampled.Theta == pytest.approx(0.8)

def test_non_atoroidal_class_is_refused(flat2):
    M, S, _ = flat2
    with pytest.raises(ClassError, match="gauge-dependent"):
        isoperimetric_constants(M, S, [1, 0])

def test_thresholds_on_the_square_torus(flat2):
    M, S, L = flat2
    growth = growth_constants_kinetic(M, L.potential)
    iso = isoperimetric_constants(M, S, [0, 0])
    assert growth.eta1 == 0.5 and growth.eta2 == 1.0
    assert delta0(growth, iso, S.growth_class) == pytest.approx(T2_DELTA0)
    assert delta0(growth, iso, S.growth_class) == pytest.approx(0.092345, abs=1e-5)
    assert delta_lagrangian(growth.ell0, iso.C0) == pytest.approx(2.0 * T2_DELTA0)

def test_bounded_primitive_has_no_threshold():
    M = flat_torus(np.eye(2))
    S = exact_cosine_form(2)
    growth = growth_constants_kinetic(M, Potential())
    iso = isoperimetric_constants(M, S, [1, 0])
    assert math.isinf(delta0(growth, iso, S.growth_class))

def test_growth_constants_follow_the_potential():
    M = flat_torus(np.eye(2))
    growth = growth_constants_kinetic(M, Potential("cosine", {"amplitude": 0.5}))
    assert growth.k1 == pytest.approx(1.0)
    assert growth.D == pytest.approx(1.0)
    assert growth.ell1 == pytest.approx(1.0)
    assert growth.ell0 == pytest.approx(0.5)

def test_growth_verdicts_hold_for_kinetic_systems(curved2):
    M, S, L = curved2
    H = fenchel_dual(M, L)
    growth = growth_constants_kinetic(M, L.potential, S)
    verdicts = verify_growth(M, H, growth, S, L)
    assert all(v for k, v in verdicts.items() if k != "h2_q")
    assert np.isfinite(verdicts["h2_q"])

def test_understated_constants_are_caught(flat2):
    M, S, L = flat2
    H = fenchel_dual(M, L)
    growth = replace(growth_constants_kinetic(M, L.potential, S), eta1=0.9, ell2=0.5)
    verdicts = verify_growth(M, H, growth, S, L)
    assert not verdicts["H1"]
    assert not verdicts["L1"]

@pytest.mark.parametrize("eta2, holds", [(2.0, True), (1.0, True), (0.5, False)])
def test_momentum_bound_scales_with_eta2(flat2, eta2, holds):
    M, S, L = flat2
    H = fenchel_dual(M, L)
    # |dH/dp|^2 = |p|^2 for the kinetic Hamiltonian
    growth = replace(growth_constants_kinetic(M, L.potential, S), eta2=eta2)
    assert verify_growth(M, H, growth, S, L)["H2_p"] is holds

def test_coercivity_bound_needs_a_gap(flat2):
    M, S, L = flat2
    growth = growth_constants_kinetic(M, L.potential)
    iso = isoperimetric_constants(M, S, [0, 0])
    assert math.isinf(coercivity_bound(iso, growth, 1.0, 1.0, 0.0))
    assert coercivity_bound(iso, growth, 0.01, 1.0, 0.0) == pytest.approx(
        0.01 * iso.C1 / (0.5 - 0.01 * iso.C0))

@pytest.mark.parametrize("f, expected", [(1.0, 0), (6.0, 0), (6.4, 2), (7.0, 2), (13.0, 4)])
def test_window_prediction(f, expected):
    assert torus_window(f, f, 1.0)["predicted_index"] == expected

def test_window_straddling_a_resonance_is_undecided():
    assert torus_window(6.0, 6.4, 1.0) is None
    assert torus_window(-1.0, 1.0, 1.0) is None
    assert predicted_constant_index(2.0 * math.pi, 1.0) is None
    assert predicted_constant_index(0.0, 1.0) == 0

def test_atoroidal_classes_of_the_three_torus(flat3):
    M, S, _ = flat3
    assert sorted(atoroidal_classes(M, S, 1)) == [(0, 0, -1), (0, 0, 0), (0, 0, 1)]

def test_constants_report(flat2):
    M, S, L = flat2
    report = constants_report(M, S, L.potential, [0, 0], 1.0, L)
    assert report["lorentz_norm"] == pytest.approx(1.0)
    assert report["isoperimetric"]["C0"] == pytest.approx(T2_C0)
    assert report["delta0"] == pytest.approx(T2_DELTA0)
    assert report["below_delta0"] is False

def test_constants_report_without_isoperimetric_constants(flat2):
    M, S, L = flat2
    report = constants_report(M, S, L.potential, [0, 1], 1.0, L)
    assert report["isoperimetric"] is None
    assert "gauge-dependent" in report["isoperimetric_error"]
