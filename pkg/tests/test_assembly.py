import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avi.assembly import Model, State, force_nu, force_u, potential_V
from avi.material import ElasticForm, ExternalPotential, Material, ScalarChi, xi_size
from avi.mesh import Marker, load_mesh, square_mesh
from avi.oracle import finite_difference_gradient


def only(d, k, block, scale=1.0):
    """Q with a single identity block: 'U', 'nu' or 'N'."""
    n = xi_size(d, k)
    Q = np.zeros((n, n))
    sl = {"U": slice(0, d * d), "nu": slice(d * d, d * d + k), "N": slice(d * d + k, n)}[block]
    Q[sl, sl] = scale * np.eye(sl.stop - sl.start)
    return ElasticForm(Q, d, k)


def random_material(rng, d=2, k=1, traction=None, eta=0.0):
    n = xi_size(d, k)
    A = rng.standard_normal((n, n))
    W = rng.standard_normal((d + k, d + k))
    return Material(ElasticForm(A @ A.T / n + 0.2 * np.eye(n), d, k), ScalarChi(1.3, k),
                    rho=1.7, eta=eta,
                    potential=ExternalPotential(W @ W.T, rng.standard_normal(d + k)),
                    traction=traction or {})


def direct_potential(model, u, nu):
    """Independent evaluation of V by pointwise densities and exact-for-quadratics quadrature."""
    mesh, mat = model.mesh, model.material
    d = mesh.dim
    if d == 2:
        bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        wts = np.full(3, 1 / 3)
    else:
        a, b = 0.5854101966249685, 0.1381966011250105
        bary = np.full((4, 4), b) + (a - b) * np.eye(4)
        wts = np.full(4, 1 / 4)
    total = 0.0
    for K, el in enumerate(mesh.elements):
        G = mesh.gradients[K]
        U = u[el].T @ G
        N = nu[el].T @ G
        for lam, wq in zip(bary, wts):
            nu_x = lam @ nu[el]
            u_x = lam @ u[el]
            dens = mat.elastic.value(U, nu_x, N) + mat.potential.value(np.concatenate([u_x, nu_x]))
            total += mat.rho * wq * mesh.volumes[K] * dens
    for facet, t in mat.traction.items():
        # linear integrand: the facet centroid rule is exact
        total -= mesh.facet_measure(facet) * t @ u[list(facet)].mean(axis=0)
    return total


def test_gradient_of_linear_u(ref_triangle):
    # e = |grad u|^2, u = x at the nodes: force on node (0,0) is 2 |K| (1,0).(-1,-1) = -1
    model = Model(ref_triangle, Material(only(2, 1, "U"), ScalarChi(1.0, 1)))
    u = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    fu, fnu = model.element_force(0, u, np.zeros((3, 1)))
    np.testing.assert_allclose(fu[0], [-1.0, 0.0], atol=1e-14)
    assert model.global_force(u, np.zeros((3, 1)))[0][0, 0] == pytest.approx(-1.0)


def test_traction_force():
    mesh = square_mesh(1, 1, {"right": "traction"})
    t = np.array([1.0, 0.0])
    mat = Material(only(2, 1, "U", 0.0), ScalarChi(1.0, 1), traction={(1, 3): t})
    model = Model(mesh, mat)
    state = State.zeros(4, 2, 1)
    for a in (1, 3):
        K = mesh.facet_element((1, 3))
        f = force_u(model, K, state)
        np.testing.assert_allclose(f[mesh.local_index(K, a)], -0.5 * t, atol=1e-15)
    # kick convention: u_dot <- u_dot - dt f / m pushes the loaded nodes in +x
    assert -model.global_force(state.u, state.nu)[0][1, 0] > 0


def test_nu_force_for_constant_descriptor(ref_triangle):
    model = Model(ref_triangle, Material(only(2, 1, "nu"), ScalarChi(1.0, 1)))
    c = 0.7
    fu, fnu = model.element_force(0, np.zeros((3, 2)), np.full((3, 1), c))
    np.testing.assert_allclose(fnu[:, 0], 2 * c * 0.5 / 3, atol=1e-15)
    assert not np.any(fu)


def test_zero_state_gives_loads_only(rng):
    mesh = square_mesh(2, 1, {"right": "traction", "left": "fixed_u"})
    trac = {f: rng.standard_normal(2) for f in mesh.facets_with(Marker.TRACTION)}
    model = Model(mesh, random_material(rng, traction=trac))
    fu, fnu = model.global_force(np.zeros((9, 2)), np.zeros((9, 1)))
    np.testing.assert_allclose(np.concatenate([fu.ravel(), fnu.ravel()]), model.linear_load)
    assert potential_V(model, State.zeros(9, 2, 1)) == pytest.approx(
        model.material.potential.w0 * mesh.total_volume * model.material.rho)


def test_zero_data_forces_vanish():
    model = Model(square_mesh(1), Material(only(2, 1, "U"), ScalarChi(1.0, 1)))
    st0 = State.zeros(4, 2, 1)
    for K in range(2):
        assert not np.any(force_u(model, K, st0)) and not np.any(force_nu(model, K, st0))


def test_pure_traction_potential():
    mesh = square_mesh(1, 1, {"right": "traction"})
    t = np.array([0.3, -1.2])
    model = Model(mesh, Material(only(2, 1, "U", 0.0), ScalarChi(1.0, 1), traction={(1, 3): t}))
    c = np.array([0.5, 2.0])
    u = np.tile(c, (4, 1))
    assert model.potential(u, np.zeros((4, 1))) == pytest.approx(-1.0 * t @ c)


@pytest.mark.parametrize("d", [2, 3])
def test_exact_integrals_match_direct_quadrature(d, rng):
    if d == 2:
        mesh = square_mesh(2, 2, {"right": "traction", "left": "fixed_nu"})
        k = 2
    else:
        mesh = load_mesh("dim 3 1\nnodes 5\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n"
                         "elements 2\n0 1 2 3\n1 2 3 4\nboundary 1\n0 1 2 traction\n")
        k = 1
    trac = {f: rng.standard_normal(d) for f in mesh.facets_with(Marker.TRACTION)}
    model = Model(mesh, random_material(rng, d, k, trac))
    for _ in range(5):
        u = rng.standard_normal((mesh.n_nodes, d))
        nu = rng.standard_normal((mesh.n_nodes, k))
        assert model.potential(u, nu) == pytest.approx(direct_potential(model, u, nu),
                                                       rel=1e-12, abs=1e-12)


def test_forces_are_potential_gradients(rng):
    mesh = square_mesh(2, 1, {"right": "traction"})
    trac = {f: rng.standard_normal(2) for f in mesh.facets_with(Marker.TRACTION)}
    model = Model(mesh, random_material(rng, traction=trac))
    for _ in range(20):
        x = rng.standard_normal(model.ndof)
        g = finite_difference_gradient(lambda y: model.potential(*model.unpack(y)), x, 1e-5)
        fu, fnu = model.global_force(*model.unpack(x))
        np.testing.assert_allclose(model.pack(fu, fnu), g, atol=1e-6)


def test_element_forces_match_element_potential(rng):
    model = Model(square_mesh(1), random_material(rng))
    for _ in range(20):
        K = int(rng.integers(2))
        u, nu = rng.standard_normal((3, 2)), rng.standard_normal((3, 1))
        x = model.local_vector(K, u, nu)
        g = finite_difference_gradient(
            lambda y: model.element_potential(K, y[:6].reshape(3, 2), y[6:].reshape(3, 1)), x)
        fu, fnu = model.element_force(K, u, nu)
        np.testing.assert_allclose(np.concatenate([fu.ravel(), fnu.ravel()]), g, atol=1e-6)


def test_taylor_check(rng):
    model = Model(square_mesh(1), random_material(rng))
    u, nu = rng.standard_normal((4, 2)), rng.standard_normal((4, 1))
    fu, _ = model.global_force(u, nu)
    errs = []
    for eps in (1e-2, 5e-3):
        up = u.copy()
        up[3, 1] += eps
        errs.append(abs(model.potential(up, nu) - model.potential(u, nu) - eps * fu[3, 1]))
    assert errs[1] < 0.3 * errs[0]


@given(seed=st.integers(0, 2**31))
def test_stiffness_symmetric(seed):
    rng = np.random.default_rng(seed)
    model = Model(square_mesh(2, 2), random_material(rng, k=2))
    x, y = rng.standard_normal(model.ndof), rng.standard_normal(model.ndof)
    Kg = model.stiffness
    assert x @ Kg @ y == pytest.approx(y @ Kg @ x, abs=1e-12 * (1 + abs(x @ Kg @ y)))


@given(seed=st.integers(0, 2**31))
def test_translation_equivariance(seed):
    rng = np.random.default_rng(seed)
    d, k = 2, 2
    n = xi_size(d, k)
    Q = np.zeros((n, n))
    grad = np.r_[0:d * d, d * d + k:n]
    A = rng.standard_normal((len(grad), len(grad)))
    Q[np.ix_(grad, grad)] = A @ A.T
    model = Model(square_mesh(2, k), Material(ElasticForm(Q, d, k), ScalarChi(1.0, k)))
    u, nu = rng.standard_normal((9, d)), rng.standard_normal((9, k))
    for K, el in enumerate(model.mesh.elements):
        fu, fnu = model.element_force(K, u[el], nu[el])
        np.testing.assert_allclose(fu.sum(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(fnu.sum(axis=0), 0.0, atol=1e-12)


def test_positions_at_advance():
    s = State.zeros(2, 2, 1)
    s.u_dot[:] = [[1.0, 0.0], [0.0, 2.0]]
    s.nu_dot[:] = [[3.0], [4.0]]
    u, nu = s.positions_at(0.5)
    np.testing.assert_allclose(u, [[0.5, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(nu, [[1.5], [2.0]])


def test_constraint_check():
    model = Model(square_mesh(1, 1, {"left": "fixed_u"}),
                  Material(only(2, 1, "U"), ScalarChi(1.0, 1)))
    s = State.zeros(4, 2, 1)
    s.u_dot[0] = [1.0, 0.0]
    with pytest.raises(ValueError, match="u_dot"):
        model.check_constraints(s)


def test_mismatched_traction_facet():
    with pytest.raises(ValueError, match="traction marker"):
        Model(square_mesh(1), Material(only(2, 1, "U"), ScalarChi(1.0, 1),
                                       traction={(1, 3): [1.0, 0.0]}))
