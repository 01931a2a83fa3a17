import numpy as np
import pytest

from avi import integrate_avi, integrate_sync, oracle, problems
from avi.assembly import Model, State
from avi.diagnostics import energy_series, energy_trend
from avi.integrate_sync import (PsiContext, PsiSolveError, gauss_rule, monotonicity_ratios,
                                psi_eval, solve_psi)
from avi.material import ElasticForm, ExternalPotential, GeneralChi, Material, MatrixChi, ScalarChi
from avi.timesets import Jittered, Uniform, build


def cosine_chi():
    """1/2 z^2 + 0.1 cos(nu) z^2: rate curvature in [0.8, 1.2]."""
    return GeneralChi(lambda nu, z: np.sum((0.5 + 0.1 * np.cos(nu)) * z * z, axis=-1),
                      lambda nu, z: -0.1 * np.sin(nu) * z * z,
                      lambda nu, z: (1.0 + 0.2 * np.cos(nu)) * z,
                      1, gamma=0.8, Xi=1.0, name="cosine")


def context(chi=None, eta=0.0, dt=0.1, quadrature="vertex", seed=0, mesh_n=2):
    rng = np.random.default_rng(seed)
    base = problems.quadratic_material(eta)
    mat = Material(base.elastic, chi or ScalarChi(1.0, 1), eta=eta, potential=base.potential)
    model = Model(problems.clamped_square(mesh_n), mat)
    shape = (model.n, 1)
    return PsiContext(model, dt, rng.uniform(-1, 1, shape), rng.uniform(-1, 1, shape),
                      rng.uniform(-1, 1, shape), quadrature)


def consistent_mass_min(model):
    lam, wq = gauss_rule(model.d)
    M = np.zeros((model.n, model.n))
    for el, vol in zip(model.mesh.elements, model.mesh.volumes):
        M[np.ix_(el, el)] += vol * np.einsum("q,qa,qb->ab", wq, lam, lam)
    return float(np.linalg.eigvalsh(M)[0])


def test_psi_vanishes_when_rate_is_unchanged():
    ctx = context()
    x = (ctx.nu_i + ctx.dt * ctx.nu_dot_prev)[ctx.free].ravel()
    np.testing.assert_allclose(psi_eval(ctx, x), 0.0, atol=1e-14)


def test_psi_affine_slope():
    eta = 0.7
    ctx = context(eta=eta, seed=1)
    w = ctx.model.coeffs.weights[ctx.free]
    x = ctx.initial_guess()
    for j in range(ctx.size):
        e = np.zeros(ctx.size)
        e[j] = 0.3
        diff = psi_eval(ctx, x + e) - psi_eval(ctx, x)
        expected = np.zeros(ctx.size)
        expected[j] = 0.3 * (w[j] * 1.0 / ctx.dt + eta * w[j])
        np.testing.assert_allclose(diff, expected, atol=1e-13)


@pytest.mark.parametrize("chi, quadrature", [
    (None, "vertex"), (None, "gauss"), (cosine_chi(), "vertex"), (cosine_chi(), "gauss"),
    (MatrixChi(np.array([[2.0]])), "vertex"),
])
def test_solve_round_trip(chi, quadrature, rng):
    ctx = context(chi, eta=0.3, quadrature=quadrature, seed=2)
    for _ in range(5):
        x0 = ctx.initial_guess() + 0.2 * rng.standard_normal(ctx.size)
        x, info = solve_psi(ctx, psi_eval(ctx, x0), tol=1e-11, return_info=True)
        assert info.residual <= 1e-11
        np.testing.assert_allclose(x, x0, atol=1e-9)


@pytest.mark.parametrize("eta", [0.0, 1.5])
def test_closed_form_matches_asynchronous_update(eta, rng):
    ctx = context(eta=eta, dt=0.1, seed=3)
    f = rng.standard_normal((ctx.model.n, 1))
    x = solve_psi(ctx, (-ctx.dt * f)[ctx.free].ravel())
    rb = ctx.model.coeffs.inertia[:, None]
    ea = ctx.model.coeffs.damping[:, None]
    rate = (rb * ctx.nu_dot_prev - ctx.dt * f) / (rb + ea * ctx.dt)
    np.testing.assert_allclose(x, (ctx.nu_i + ctx.dt * rate)[ctx.free].ravel(), atol=1e-14)


def bisect(fn, lo, hi, iters=200):
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (fn(mid) > 0) == (flo > 0):
            lo, flo = mid, fn(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_general_chi_against_bisection(rng):
    ctx = context(cosine_chi(), eta=0.4, seed=4)
    assert ctx.dt < ctx.T0
    rhs = 0.05 * rng.standard_normal(ctx.size)
    x, info = solve_psi(ctx, rhs, tol=1e-10, max_iters=50, return_info=True)
    assert info.residual <= 1e-10 and info.iterations <= 50
    # vertex quadrature decouples Psi per node: solve each scalar equation by bisection
    base = ctx.initial_guess()
    for j in range(ctx.size):
        def comp(s, j=j):
            y = x.copy()
            y[j] = s
            return psi_eval(ctx, y)[j] - rhs[j]
        ref = bisect(comp, base[j] - 5.0, base[j] + 5.0)
        assert x[j] == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("quadrature", ["vertex", "gauss"])
def test_strong_monotonicity(quadrature):
    ctx = context(cosine_chi(), eta=0.2, dt=0.2, quadrature=quadrature, seed=5)
    gamma, _ = ctx.chi.constants()
    if quadrature == "vertex":
        scale = ctx.model.coeffs.weights[ctx.free].min()
    else:
        scale = consistent_mass_min(ctx.model)
    ratios = monotonicity_ratios(ctx, pairs=100, rng=0)
    assert ratios.min() >= scale * gamma / 2 - 1e-9


def test_general_problem_runs_with_both_rules():
    p = problems.general_chi_problem()
    theta = build(p.model.mesh, 0.0, 1.0, Uniform(10), mode="relaxed")
    a = integrate_sync.run(model=p.model, timeset=theta, init=p.init, tol=1e-10)
    b = integrate_sync.run(model=p.model, timeset=theta, init=p.init, quadrature="gauss", tol=1e-10)
    assert a.info["psi_iterations"] > 0
    assert np.all(np.isfinite(b.nodes[3].nu))
    assert a.nodes[3].nu[-1, 0] == pytest.approx(b.nodes[3].nu[-1, 0], abs=0.1)


def test_zero_data_gives_zero_trajectory():
    model = Model(problems.clamped_square(2), problems.quadratic_material(eta=0.5))
    theta = build(model.mesh, 0.0, 1.0, Uniform(10), mode="relaxed")
    traj = integrate_sync.run(model=model, timeset=theta)
    assert all(not np.any(h.u) and not np.any(h.nu_dot) for h in traj.nodes)


def test_second_order_against_oracle():
    p = problems.quadratic_problem()
    sys = oracle.assemble(model=p.model)
    errs = []
    for n in (50, 100):
        theta = build(p.model.mesh, 0.0, 1.0, Uniform(n), mode="relaxed")
        traj = integrate_sync.run(model=p.model, timeset=theta, init=p.init)
        U, N = traj.values_at(theta.global_times)
        X = np.array([p.model.pack(U[i], N[i]) for i in range(len(U))])
        Xr, _ = oracle.exact_solution(sys, p.init, theta.global_times)
        errs.append(np.abs(X - Xr).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def discrete_frequencies(model, h):
    """Eigen-angles of the one-step map (x_i, v_i) -> (x_{i+1}, v_{i+1}) divided by h."""
    free = model.free_dofs
    p = int(free.sum())
    theta = build(model.mesh, 0.0, 2 * h, Uniform(2), mode="relaxed")
    A = np.zeros((2 * p, 2 * p))
    idx = np.flatnonzero(free)
    for j in range(2 * p):
        s = np.zeros(2 * model.ndof)
        s[idx[j % p] + (model.ndof if j >= p else 0)] = 1.0
        init = State.zeros(model.n, model.d, model.k)
        init.u[:], init.nu[:] = model.unpack(s[:model.ndof])
        init.u_dot[:], init.nu_dot[:] = model.unpack(s[model.ndof:])
        traj = integrate_sync.run(model=model, timeset=theta, init=init)
        U, N = traj.values_at([h])
        UD, ND = traj.rates_at([h])
        A[:p, j] = model.pack(U[0], N[0])[free]
        A[p:, j] = model.pack(UD[0], ND[0])[free]
    ang = np.abs(np.angle(np.linalg.eigvals(A)))
    return np.sort(ang[ang > 0])[::2] / h


def test_matrix_chi_frequencies_converge():
    omega = MatrixChi(np.diag([1.0, 4.0]))
    mat = Material(ElasticForm.isotropic(2, 2, 1.0, 1.0, 2.0, 0.5, 0.3), omega,
                   potential=ExternalPotential(np.diag([0.5, 0.5, 0.3, 0.3]), np.zeros(4)))
    model = Model(problems.clamped_square(1, 2), mat)
    exact = np.sort(oracle.assemble(model=model).frequencies())
    errs = []
    for h in (0.02, 0.01):
        disc = discrete_frequencies(model, h)
        assert disc.shape == exact.shape
        errs.append(np.abs(disc - exact).max())
    assert errs[1] < errs[0] / 3.5
    # central difference lengthens frequencies by about (omega h)^2 / 24
    assert errs[1] <= np.max(exact ** 3) * 0.01 ** 2 / 24 * 1.1


def test_dissipation_decreases_energy():
    p = problems.quadratic_problem(eta=1.0)
    rises = []
    for n in (100, 200):
        theta = build(p.model.mesh, 0.0, 1.0, Uniform(n), mode="relaxed")
        traj = integrate_sync.run(model=p.model, timeset=theta, init=p.init)
        slope, rise = energy_trend(*energy_series(traj))
        assert slope < 0
        rises.append(rise)
    assert rises[1] <= 0.5 * rises[0] + 1e-15


def test_solver_errors():
    ctx = context(cosine_chi(), seed=6)
    with pytest.raises(ValueError, match="tol"):
        solve_psi(ctx, np.zeros(ctx.size), tol=0.0)
    with pytest.raises(PsiSolveError) as exc:
        solve_psi(ctx, np.full(ctx.size, 0.5), tol=1e-300, max_iters=1)
    assert exc.value.residual > 0
    with pytest.raises(ValueError, match="positive"):
        context(dt=0.0)


def test_window_warning():
    with pytest.warns(UserWarning, match="monotonicity window"):
        context(cosine_chi(), dt=1.0)


def test_rejects_asynchronous_sets():
    p = problems.quadratic_problem()
    theta = build(p.model.mesh, 0.0, 1.0, Jittered(10))
    with pytest.raises(ValueError, match="identical"):
        integrate_sync.run(model=p.model, timeset=theta, init=p.init)


def test_quadratic_vertex_equals_avi():
    p = problems.quadratic_problem(eta=0.25)
    theta = build(p.model.mesh, 0.0, 1.0, Uniform(30), mode="relaxed")
    s = integrate_sync.run(model=p.model, timeset=theta, init=p.init)
    a = integrate_avi.run(model=p.model, timeset=theta, init=p.init)
    for hs, ha in zip(s.nodes, a.nodes):
        np.testing.assert_allclose(hs.nu, ha.nu, atol=1e-12, rtol=0)
