import numpy as np
import pytest

from dgstep.core import GradientSystemProblem
from dgstep.problems import CnoidalWave, QuarticProblem, ScalarODEProblem, build_kdv_problem, interpolate_initial
from dgstep.stepper import (
    NewtonConvergenceError,
    NewtonOptions,
    SingularJacobianError,
    SlabSystem,
    SolverError,
    TimeMesh,
    _jacobian,
    _slab_sparsity,
    assemble_residual,
    energy_identity_residual,
    evaluate,
    integrate,
    newton_solve,
    sample_interval,
    step_interval,
)


class LinearDecay(GradientSystemProblem):
    """E = u^2 / 2 with L = -lam, so u' = -lam u."""

    dim = 1
    gram_matrix = np.eye(1)

    def __init__(self, lam=1.0):
        self.lam = lam

    def energy(self, u):
        return 0.5 * float(u @ u)

    def grad_weak(self, u):
        return u.copy()

    def op_weak(self, u_ctx, p):
        return -self.lam * p


class Flat(LinearDecay):
    def energy(self, u):
        return 0.0

    def grad_weak(self, u):
        return np.zeros_like(u)


def test_k0_linear_decay():
    sol = step_interval(LinearDecay(), "native", np.array([0.9]), 1.0, 0)
    assert sol.u_coeffs.shape == (1, 1)
    assert sol.u_coeffs[0, 0] == pytest.approx(0.3, abs=1e-14)
    assert sol.p_coeffs[0, 0] == pytest.approx(0.6, abs=1e-14)


def k1_linear_oracle(lam, tau, u_prev):
    """Exact slab equations for k = 1 in unknowns (U0, U1, P0, P1)."""
    # R1 rows: ((U1 - U0)/2 + (U0 - u_prev), (U1 - U0)/2) + tau lam (P0/3 + P1/6, P0/6 + P1/3)
    A = np.array([
        [0.5, 0.5, tau * lam / 3, tau * lam / 6],
        [-0.5, 0.5, tau * lam / 6, tau * lam / 3],
        [-0.5, -0.5, 0.5, 0.5],  # one Gauss point: mean of p - u
        [-0.5, 0.0, 1.0, 0.0],  # p(0) = (u(0) + u_prev)/2
    ])
    rhs = np.array([u_prev, 0.0, 0.0, 0.5 * u_prev])
    return np.linalg.solve(A, rhs)


@pytest.mark.parametrize("lam,tau", [(1.0, 0.5), (3.0, 0.1), (0.2, 2.0)])
def test_k1_against_hand_assembled_system(lam, tau):
    ref = k1_linear_oracle(lam, tau, 1.3)
    sol = step_interval(LinearDecay(lam), "native", np.array([1.3]), tau, 1)
    np.testing.assert_allclose(sol.u_coeffs[:, 0], ref[:2], atol=1e-13)
    np.testing.assert_allclose(sol.p_coeffs[:, 0], ref[2:], atol=1e-13)
    res = assemble_residual(LinearDecay(lam), "native", np.array([1.3]), (ref[:2, None], ref[2:, None]), tau, 1)
    assert np.max(np.abs(res)) < 1e-14


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_zero_gradient_keeps_state(k):
    u_prev = np.array([0.42])
    sol = step_interval(Flat(), "native", u_prev, 0.7, k)
    np.testing.assert_allclose(sol.u_coeffs, np.full((k + 1, 1), 0.42), atol=1e-14)
    np.testing.assert_allclose(sol.p_coeffs, 0.0, atol=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_equilibrium_is_preserved(k):
    traj = integrate(ScalarODEProblem(), "native", np.array([1.0]), TimeMesh.uniform(20.0, 8), k)
    np.testing.assert_allclose(traj.nodal_values, 1.0, atol=1e-14)
    assert all(n <= 1 for n in traj.newton_iters)


def test_residual_layout():
    prob = QuarticProblem(3)
    system = SlabSystem(prob, 2)
    x = np.arange(system.n_unknowns, dtype=float)
    U, P = system.split(x)
    assert U.shape == P.shape == (3, 3)
    assert U[1, 0] == 3.0 and P[0, 0] == 9.0
    assert system.residual(x, np.zeros(3), 0.1).shape == (18,)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ode_energy_decreases_with_identity(k):
    prob = ScalarODEProblem()
    traj = integrate(prob, "native", np.array([1e-5]), TimeMesh.uniform(20.0, 8), k)
    energies = [prob.energy(u) for u in traj.nodal_values]
    assert np.all(np.diff(energies) <= 1e-15)
    for n in range(1, 9):
        assert energy_identity_residual(prob, traj, n) <= 1e-12
    assert abs(traj.nodal_values[-1, 0] - 1.0) < 1e-4


@pytest.mark.parametrize("choice", ["native", "gonzalez", "avf", "itoh-abe"])
def test_quartic_all_discrete_gradients(choice):
    prob = QuarticProblem(4)
    u0 = np.array([0.1, -0.2, 0.3, 0.05])
    traj = integrate(prob, choice, u0, TimeMesh.uniform(2.0, 6), 2)
    for n in range(1, 7):
        assert energy_identity_residual(prob, traj, n) <= 1e-11
    energies = [prob.energy(u) for u in traj.nodal_values]
    assert np.all(np.diff(energies) <= 1e-14)


def test_nonuniform_mesh_and_kdv_conservation():
    wave = CnoidalWave()
    prob = build_kdv_problem(8, 2, wave.domain_length)
    u0 = interpolate_initial(prob, wave)
    mesh = TimeMesh(np.array([0.0, 0.05, 0.12, 0.2]))
    traj = integrate(prob, "native", u0, mesh, 1)
    E = [prob.energy(u) for u in traj.nodal_values]
    m = [prob.mass(u) for u in traj.nodal_values]
    assert np.ptp(E) <= 1e-11 * (1 + abs(E[0]))
    assert np.ptp(m) <= 1e-12


def test_evaluate_conventions():
    prob = ScalarODEProblem()
    mesh = TimeMesh.uniform(4.0, 4)
    traj = integrate(prob, "native", np.array([0.2]), mesh, 2)
    u, _ = evaluate(traj, 0.0)
    np.testing.assert_array_equal(u, [0.2])
    for n in range(1, 5):
        u, _ = evaluate(traj, mesh.nodes[n])
        np.testing.assert_allclose(u, traj.nodal_values[n], atol=1e-15)
    # jump at t_1: the right limit is the left trace of interval 2
    right = sample_interval(traj, 2, [0.0])[0]
    assert abs(right[0] - traj.nodal_values[1, 0]) > 1e-8
    u_after, _ = evaluate(traj, 1.0 + 1e-12)
    np.testing.assert_allclose(u_after, right, atol=1e-10)
    with pytest.raises(ValueError):
        evaluate(traj, 4.5)


def test_newton_linear_one_iteration():
    c = np.array([1.0, -2.0, 3.0])
    x, iters, norm = newton_solve(lambda x: x - c, np.zeros(3))
    np.testing.assert_allclose(x, c, atol=1e-12)
    assert iters == 1 and norm <= 1e-12


def test_newton_quadratic_root():
    x, iters, _ = newton_solve(lambda x: x**2 - 4, np.array([3.0]))
    assert abs(x[0] - 2.0) < 1e-12
    assert 3 <= iters <= 8


def test_newton_failures():
    with pytest.raises(NewtonConvergenceError) as info:
        newton_solve(lambda x: np.arctan(x), np.array([10.0]), NewtonOptions(max_iters=3))
    assert info.value.iterations == 3
    with pytest.raises(SingularJacobianError):
        newton_solve(lambda x: np.array([x[0] + x[1], x[0] + x[1] - 1]), np.zeros(2))
    with pytest.raises(NewtonConvergenceError):
        newton_solve(lambda x: x * np.nan, np.ones(2))


def test_solver_error_carries_interval():
    prob = ScalarODEProblem()
    mesh = TimeMesh.uniform(20.0, 8)
    iters = integrate(prob, "native", np.array([1e-5]), mesh, 2).newton_iters
    first_hard = next(n for n, it in enumerate(iters, start=1) if it > 1)
    with pytest.raises(SolverError) as info:
        integrate(prob, "native", np.array([1e-5]), mesh, 2, NewtonOptions(max_iters=1))
    assert info.value.interval == first_hard


def test_reuse_jacobian_mode_agrees():
    prob = QuarticProblem(2)
    u0 = np.array([0.3, 0.1])
    mesh = TimeMesh.uniform(1.0, 4)
    full = integrate(prob, "native", u0, mesh, 2)
    reuse = integrate(prob, "native", u0, mesh, 2, NewtonOptions(jacobian_mode="reuse_per_interval"))
    np.testing.assert_allclose(reuse.nodal_values, full.nodal_values, atol=1e-11)
    assert sum(reuse.newton_iters) >= sum(full.newton_iters)


def test_grouped_jacobian_matches_dense():
    prob = build_kdv_problem(8, 2, 5.0)
    system = SlabSystem(prob, 1)
    sparsity = _slab_sparsity(system)
    groups = system.column_groups()
    assert len(groups) < system.n_unknowns
    rng = np.random.default_rng(0)
    u_prev = rng.uniform(-1, 1, prob.dim)
    x = rng.uniform(-1, 1, system.n_unknowns)
    fun = lambda y: system.residual(y, u_prev, 0.1)  # noqa: E731
    f0 = fun(x)
    dense = _jacobian(fun, x, f0, 1e-7, None, None)
    grouped = _jacobian(fun, x, f0, 1e-7, groups, sparsity)
    np.testing.assert_allclose(grouped, dense, atol=1e-6)
    # non-local discrete gradients fall back to dense columns
    assert _slab_sparsity(SlabSystem(prob, 1, dgrad="gonzalez")) is None


def test_mesh_validation():
    with pytest.raises(ValueError):
        TimeMesh(np.array([0.0]))
    with pytest.raises(ValueError):
        TimeMesh(np.array([0.1, 0.5]))
    with pytest.raises(ValueError):
        TimeMesh(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        TimeMesh.uniform(1.0, 0)
    mesh = TimeMesh.uniform(2.0, 4)
    assert mesh.N == 4 and mesh.T == 2.0
    np.testing.assert_allclose(mesh.steps, 0.5)


def test_options_validation():
    with pytest.raises(ValueError):
        NewtonOptions(abs_tol=0)
    with pytest.raises(ValueError):
        NewtonOptions(max_iters=0)
    with pytest.raises(ValueError):
        NewtonOptions(jacobian_mode="exact")
    with pytest.raises(ValueError):
        SlabSystem(ScalarODEProblem(), -1)


def test_energy_identity_index_check():
    traj = integrate(ScalarODEProblem(), "native", np.array([0.5]), TimeMesh.uniform(1.0, 2), 1)
    with pytest.raises(ValueError):
        energy_identity_residual(ScalarODEProblem(), traj, 3)
