import math
import numpy as np
import pytest
from geometry.torus import flat_torus
from loopspace.actions import (L2, W12, action_hamiltonian, action_lagrangian, action_sigma, action_total,
                               atoroidal_test, differential, el_residual, gradient, hessian, hessian_vector,
                               inner_product, legendre_lift)
from loopspace.discrete_loop import CotangentLoop, DiscreteLoop
from loopspace.lagrangian import LagrangianSystem
from loopspace.loop_io import load_loop, save_loop, save_polyline
from services.hamiltonian_flow import fenchel_dual
from utils.errors import ClassError

def _random_loop(rng, winding, N=32, tau=1.0, amplitude=0.2):
    return DiscreteLoop.random_fourier(winding, N, tau, rng, modes=3, amplitude=amplitude)

def _fd_differential(action, q, step=1e-6):
    out = np.zeros(q.samples.shape)
    for j in range(q.N):
        for i in range(q.dim):
            e = np.zeros(q.samples.shape)
            e[j, i] = step
            out[j, i] = (action(q.with_samples(q.samples + e)) - action(q.with_samples(q.samples - e))) / (2 * step)
    return out

def test_loop_validation():
    with pytest.raises(ValueError, match="at least 8"):
        DiscreteLoop(np.zeros((4, 2)), [0, 0])
    with pytest.raises(ValueError, match="integral"):
        DiscreteLoop(np.zeros((8, 2)), [0.5, 0])
    with pytest.raises(ValueError, match="positive"):
        DiscreteLoop(np.zeros((8, 2)), [0, 0], 0.0)

def test_straight_line_geometry():
    q = DiscreteLoop.straight_line([1, 2], 16, 2.0)
    np.testing.assert_allclose(q.closed_samples()[-1], [1.0, 2.0])
    np.testing.assert_allclose(q.velocities(), np.tile([0.5, 1.0], (16, 1)))
    assert q.length() == pytest.approx(math.sqrt(5.0))
    assert q.velocity_l2_sq() == pytest.approx(2.0 * 1.25)

def test_refinement_keeps_the_loop_shape():
    q = DiscreteLoop.circle([0, 0], 3.0, 8)
    assert q.needs_refinement()
    fine = q.ensure_resolution()
    assert not fine.needs_refinement()
    np.testing.assert_allclose(fine.samples[::fine.N // 8], q.samples)

def test_polygon_area_of_a_circle(flat2):
    M, S, _ = flat2
    N, r = 64, 0.3
    exact = 0.5 * N * r * r * math.sin(2 * math.pi / N)
    ccw = DiscreteLoop.circle([0.2, 0.7], r, N)
    cw = DiscreteLoop.circle([0.2, 0.7], r, N, clockwise=True)
    assert action_sigma(M, S, ccw) == pytest.approx(exact, rel=1e-12)
    assert action_sigma(M, S, cw) == pytest.approx(-exact, rel=1e-12)

def test_magnetic_action_is_independent_of_the_lift(flat3, rng):
    M, S, _ = flat3
    q = _random_loop(rng, [0, 0, 1])
    value = action_sigma(M, S, q, check_gauge=True)
    assert action_sigma(M, S, q.translate([2, -1, 3])) == pytest.approx(value, abs=1e-10)

def test_non_atoroidal_class_is_gauge_dependent(flat2, rng):
    M, S, L = flat2
    q = _random_loop(rng, [1, 0])
    assert not atoroidal_test(M, S, [1, 0])
    with pytest.raises(ClassError, match="gauge-dependent"):
        action_sigma(M, S, q)
    with pytest.raises(ClassError):
        action_total(M, S, L, q)

def test_total_action_without_magnetic_term(flat2):
    M, S, L = flat2
    q = DiscreteLoop.straight_line([1, 0], 32, 0.5)
    # class (1, 0) is not atoroidal, but delta = 0 never touches the primitive
    assert action_total(M, S.with_delta(0.0), L, q) == pytest.approx(1.0)
    assert action_lagrangian(M, L, q) == pytest.approx(1.0)

def test_lagrangian_must_share_the_manifold(flat2):
    M, S, _ = flat2
    other = LagrangianSystem(flat_torus(np.eye(2)))
    with pytest.raises(ValueError):
        legendre_lift(M, other, DiscreteLoop.constant([0, 0], 16))

def test_legendre_lift_of_the_kinetic_lagrangian(curved2, rng):
    M, _, L = curved2
    q = _random_loop(rng, [1, 0])
    x = legendre_lift(M, L, q)
    expected = np.einsum("nij,nj->ni", M.metric(q.samples), q.node_velocities())
    np.testing.assert_allclose(x.momenta, expected, rtol=1e-12)

def test_hamiltonian_action_of_a_constant_loop(flat2):
    M, S, L = flat2
    q = DiscreteLoop.constant([0.3, 0.4], 16)
    x = CotangentLoop(q, np.tile([1.0, 0.0], (16, 1)))
    # no motion, energy 1/2 over one period
    assert action_hamiltonian(M, S, fenchel_dual(M, L), x) == pytest.approx(-0.5)

def test_hamiltonian_action_of_a_lifted_circle(flat2):
    M, S, L = flat2
    N = 128
    q = DiscreteLoop.circle([0.2, 0.1], 0.3, N)
    value = action_hamiltonian(M, S, fenchel_dual(M, L), legendre_lift(M, L, q))
    # node-centred momenta shrink by cos^2(pi / N) against edge velocities
    kinetic = action_lagrangian(M, L, q)
    gap = math.sin(math.pi / N) ** 4 * kinetic
    assert value == pytest.approx(action_total(M, S, L, q) - gap, rel=1e-10)
    assert value == pytest.approx(action_total(M, S, L, q), rel=1e-7)

def test_hamiltonian_action_needs_an_atoroidal_class(flat2):
    M, S, L = flat2
    H = fenchel_dual(M, L)
    x = legendre_lift(M, L, DiscreteLoop.straight_line([1, 0], 32))
    with pytest.raises(ClassError):
        action_hamiltonian(M, S, H, x)
    assert action_hamiltonian(M, S.with_delta(0.0), H, x) == pytest.approx(0.5)

@pytest.mark.parametrize("system", ["curved2", "relativistic2"])
def test_differential_matches_finite_differences(system, request, rng):
    M, S, L = request.getfixturevalue(system)
    q = _random_loop(rng, [1, -1], N=16)
    fd = _fd_differential(lambda loop: action_total(M, S, L, loop), q)
    np.testing.assert_allclose(differential(M, S, L, q), fd, atol=1e-6)

@pytest.mark.parametrize("system", ["curved2", "relativistic2"])
def test_hessian_matches_differences_of_the_differential(system, request, rng):
    M, S, L = request.getfixturevalue(system)
    q = _random_loop(rng, [0, 1], N=16)
    Hm = hessian(M, S, L, q)
    np.testing.assert_allclose(Hm, Hm.T, atol=1e-12)
    step = 1e-6
    for col in range(0, q.N * q.dim, 5):
        e = np.zeros(q.N * q.dim)
        e[col] = step
        plus = differential(M, S, L, q.with_samples(q.samples + e.reshape(q.N, q.dim)))
        minus = differential(M, S, L, q.with_samples(q.samples - e.reshape(q.N, q.dim)))
        fd = (plus - minus).ravel() / (2 * step) / q.h
        np.testing.assert_allclose(Hm[:, col], fd, atol=1e-5)

def test_hessian_vector_agrees_with_the_matrix(curved2, rng):
    M, S, L = curved2
    q = _random_loop(rng, [0, 0], N=16)
    xi = rng.normal(size=(16, 2))
    np.testing.assert_allclose(hessian_vector(M, S, L, q, xi).ravel(), hessian(M, S, L, q) @ xi.ravel())

def test_gradients_are_riesz_representatives(curved2, rng):
    M, S, L = curved2
    q = _random_loop(rng, [1, 1], N=32)
    xi = rng.normal(size=(32, 2))
    dS = float(np.sum(differential(M, S, L, q) * xi))
    assert inner_product(q, gradient(M, S, L, q, L2), xi, L2) == pytest.approx(dS, rel=1e-10)
    assert inner_product(q, gradient(M, S, L, q, W12), xi, W12) == pytest.approx(dS, rel=1e-10)

def test_el_residual_vanishes_on_straight_lines(flat3):
    M, S, L = flat3
    q = DiscreteLoop.straight_line([0, 0, 2], 32, 0.5, base=[0.3, 0.1, 0.0])
    assert el_residual(M, S, L, q) < 1e-12

def test_derivatives_refuse_coarse_loops(flat2):
    M, S, L = flat2
    q = DiscreteLoop.circle([0, 0], 3.0, 8)
    with pytest.raises(ValueError, match="too coarse"):
        differential(M, S, L, q)

def test_loop_files(tmp_path, rng):
    q = _random_loop(rng, [0, 1], N=16, tau=0.25)
    path = save_loop(tmp_path / "loop.csv", q, {"action": 1.5})
    loaded, meta = load_loop(path)
    np.testing.assert_array_equal(loaded.samples, q.samples)
    np.testing.assert_array_equal(loaded.winding, [0, 1])
    assert loaded.tau == 0.25
    assert meta["action"] == 1.5
    lines = save_polyline(tmp_path / "loop.poly", q).read_text().splitlines()
    assert len(lines) == q.N + 1
    closing = [float(v) for v in lines[-1].split()]
    assert closing[0] == pytest.approx(0.25)
    np.testing.assert_allclose(closing[1:], q.samples[0] + [0, 1])
