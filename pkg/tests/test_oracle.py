from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from avi import oracle, problems
from avi.assembly import Model
from avi.material import ElasticForm, Material, ScalarChi, tanh_coupled_chi, xi_size
from avi.oracle import LinearSystem, assemble, exact_solution, expm, finite_difference_gradient


class ScalarModel:
    """One free channel: just enough of Model for the oracle."""

    ndof = 1

    @staticmethod
    def pack(u, nu):
        return np.concatenate([np.ravel(u), np.ravel(nu)])


def scalar_system(m, c, k):
    return LinearSystem(np.array([[m]]), np.array([[c]]), np.array([[k]]), np.zeros(1),
                        np.array([True]), ScalarModel())


def scalar_init(x, v):
    return SimpleNamespace(u=np.array([x]), nu=np.zeros(0), u_dot=np.array([v]),
                           nu_dot=np.zeros(0), t=0.0)


def test_harmonic_oscillator():
    X, V = exact_solution(scalar_system(1.0, 0.0, 1.0), scalar_init(1.0, 0.0), [1.0])
    assert X[0, 0] == pytest.approx(0.5403023058681398, abs=1e-12)
    assert V[0, 0] == pytest.approx(-np.sin(1.0), abs=1e-12)


def test_pure_dissipation():
    _, V = exact_solution(scalar_system(1.0, 1.0, 0.0), scalar_init(0.0, 1.0), [1.0, 2.0])
    assert V[0, 0] == pytest.approx(0.36787944117144233, abs=1e-12)
    assert V[1, 0] == pytest.approx(np.exp(-2.0), abs=1e-12)


def test_initial_time_returns_initial_data(quadratic):
    sys = assemble(model=quadratic.model)
    X, V = exact_solution(sys, quadratic.init, [0.0])
    m = quadratic.model
    np.testing.assert_array_equal(X[0], m.pack(quadratic.init.u, quadratic.init.nu))
    np.testing.assert_array_equal(V[0], m.pack(quadratic.init.u_dot, quadratic.init.nu_dot))


@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 50.0))
def test_expm_matches_scipy(seed, scale):
    A = np.random.default_rng(seed).standard_normal((6, 6)) * scale / 6
    ref = scipy.linalg.expm(A)
    np.testing.assert_allclose(expm(A), ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


def test_energy_constant_without_damping(quadratic):
    sys = assemble(model=quadratic.model)
    times = np.linspace(0.0, 3.0, 31)
    X, V = exact_solution(sys, quadratic.init, times)
    E = [sys.energy(x, v) for x, v in zip(X, V)]
    np.testing.assert_allclose(E, E[0], atol=1e-9)


def test_energy_decreases_with_damping():
    p = problems.quadratic_problem(eta=0.8)
    sys = assemble(model=p.model)
    X, V = exact_solution(sys, p.init, np.linspace(0.0, 3.0, 61))
    E = np.array([sys.energy(x, v) for x, v in zip(X, V)])
    assert np.all(np.diff(E) <= 1e-12)
    assert E[-1] < E[0]


def test_descriptor_only_stiffness_is_twice_mass_pairing(ref_triangle):
    n = xi_size(2, 1)
    Q = np.zeros((n, n))
    Q[4, 4] = 1.0  # e = |nu|^2
    model = Model(ref_triangle, Material(ElasticForm(Q, 2, 1), ScalarChi(1.0, 1)))
    sys = assemble(model=model)
    nu = slice(6, 9)
    pairing = 0.5 * (np.ones((3, 3)) + np.eye(3)) / 12
    np.testing.assert_allclose(sys.K[nu, nu], 2 * pairing, atol=1e-15)


def test_zero_material_moves_affinely():
    n = xi_size(2, 1)
    model = Model(problems.clamped_square(), Material(ElasticForm(np.zeros((n, n)), 2, 1),
                                                      ScalarChi(1.0, 1)))
    sys = assemble(model=model)
    assert not np.any(sys.K)
    init = problems.quadratic_problem().init
    X, V = exact_solution(sys, init, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(X[2] - X[1], X[1] - X[0], atol=1e-14)
    np.testing.assert_allclose(V[2], V[0], atol=1e-14)


def test_stiffness_symmetric(quadratic, rng):
    K = assemble(model=quadratic.model).K
    x, y = rng.standard_normal(K.shape[0]), rng.standard_normal(K.shape[0])
    assert (K @ x) @ y == pytest.approx(x @ (K @ y), abs=1e-12)
    Kf = assemble(model=quadratic.model).reduced()[2]
    assert np.linalg.eigvalsh(Kf)[0] >= -1e-12


def test_rejects_general_chi_and_constrained_data(quadratic):
    mat = Material(quadratic.model.material.elastic, tanh_coupled_chi(1))
    with pytest.raises(ValueError, match="general"):
        assemble(model=Model(quadratic.model.mesh, mat))
    init = quadratic.init.copy()
    init.u[0] = (1.0, 0.0)
    with pytest.raises(ValueError, match="constrained"):
        exact_solution(assemble(model=quadratic.model), init, [0.5])


def test_frequencies_from_modes(quadratic):
    sys = assemble(model=quadratic.model)
    w, phi = sys.modes()
    M, _, K, _ = sys.reduced()
    np.testing.assert_allclose(K @ phi, M @ phi * w ** 2, atol=1e-10)
    np.testing.assert_allclose(np.sort(sys.frequencies()), np.sort(w), atol=1e-12)


def test_fd_gradient_examples():
    g = finite_difference_gradient(lambda x: float(x @ x), np.array([1.0, 2.0]), 1e-4)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)
    a = np.array([3.0, -1.0, 0.5])
    for step in (1e-1, 1e-3):
        np.testing.assert_allclose(finite_difference_gradient(lambda x: float(a @ x), np.ones(3), step),
                                   a, atol=1e-12)
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda x: 0.0, np.ones(2), 0.0)


def test_oracle_module_exposes_expm():
    assert oracle.expm(np.zeros((2, 2))) == pytest.approx(np.eye(2))
