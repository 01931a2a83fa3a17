"""Synchronous variational integrator for a general kinetic co-energy.

Displacements follow the explicit kick of the asynchronous scheme, using the
global force. The descriptor at t_{i+1} solves Psi(nu) = -dt F_nu(t_i) where

    Psi_a(nu) = int [d_rate chi(nu(t_i), z) - d_rate chi(nu, nu_dot)(t_{i-1})] N_a
                - dt int d_nu chi(nu(t_i), z) N_a + eta_a (nu_a - nu_a(t_i)),
    z = sum_b N_b (nu_b - nu_b(t_i)) / dt,

which is strongly monotone once dt < 2 gamma / (2 Xi + gamma). Integrals use
vertex quadrature (decoupled per node) or a degree-2 Gauss rule.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import Model, State
from .integrate_avi import IntegrationError, _as_model
from .material import ScalarChi, monotonicity_window
from .timesets import TimeSet
from .trajectory import NodeHistory, Trajectory

log = logging.getLogger(__name__)


class PsiSolveError(IntegrationError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


_TRI = (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3))
_a, _b = 0.5854101966249685, 0.1381966011250105
_TET = (np.array([[_a, _b, _b, _b], [_b, _a, _b, _b], [_b, _b, _a, _b], [_b, _b, _b, _a]]),
        np.full(4, 1 / 4))


def gauss_rule(d: int):
    """Degree-2 simplex rule as (barycentric points, weights summing to 1)."""
    return _TRI if d == 2 else _TET


@dataclass(eq=False)
class PsiContext:
    model: Model
    dt: float  # t_{i+1} - t_i
    nu_i: np.ndarray  # (n, k) at t_i
    nu_prev: np.ndarray  # (n, k) at t_{i-1}
    nu_dot_prev: np.ndarray  # (n, k) rate on [t_{i-1}, t_i)
    quadrature: str = "vertex"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.quadrature not in ("vertex", "gauss"):
            raise ValueError(f"quadrature must be vertex or gauss, got {self.quadrature!r}")
        gamma, Xi = self.chi.constants()
        self.T0 = monotonicity_window(gamma, Xi)
        if self.dt >= self.T0:
            warnings.warn(f"step {self.dt:.3g} is outside the monotonicity window "
                          f"T0={self.T0:.3g}; Psi may fail to be invertible", stacklevel=2)
        self._old = self._old_momentum()

    @property
    def chi(self):
        return self.model.material.chi

    @property
    def free(self) -> np.ndarray:
        return ~self.model.mesh.fixed_nu_nodes

    @property
    def size(self) -> int:
        return int(self.free.sum()) * self.model.k

    def _full(self, x) -> np.ndarray:
        nu = np.zeros_like(self.nu_i)
        nu[self.free] = np.asarray(x, float).reshape(-1, self.model.k)
        return nu

    def _old_momentum(self) -> np.ndarray:
        """int d_rate chi at t_{i-1} against each N_a, shape (n, k)."""
        chi, m = self.chi, self.model
        if self.quadrature == "vertex":
            return m.coeffs.weights[:, None] * chi.d_rate(self.nu_prev, self.nu_dot_prev)
        lam, wq, el, vol = self._gauss()
        nq = lam @ self.nu_prev[el]  # (m, q, k)
        zq = lam @ self.nu_dot_prev[el]
        p = chi.d_rate(nq, zq) * (vol[:, None] * wq)[:, :, None]
        out = np.zeros_like(self.nu_i)
        np.add.at(out, el, np.einsum("qa,mqk->mak", lam, p))
        return out

    def _gauss(self):
        mesh = self.model.mesh
        lam, wq = gauss_rule(mesh.dim)
        return lam, wq, mesh.elements, mesh.volumes

    def full_eval(self, nu: np.ndarray) -> np.ndarray:
        """Psi on full nodal arrays (n, k); rows of constrained nodes are meaningless."""
        chi, m, dt = self.chi, self.model, self.dt
        z = (nu - self.nu_i) / dt
        if self.quadrature == "vertex":
            w = m.coeffs.weights[:, None]
            new = w * (chi.d_rate(self.nu_i, z) - dt * chi.d_nu(self.nu_i, z))
        else:
            lam, wq, el, vol = self._gauss()
            nq = lam @ self.nu_i[el]
            zq = lam @ z[el]
            p = (chi.d_rate(nq, zq) - dt * chi.d_nu(nq, zq)) * (vol[:, None] * wq)[:, :, None]
            new = np.zeros_like(self.nu_i)
            np.add.at(new, el, np.einsum("qa,mqk->mak", lam, p))
        return new - self._old + m.coeffs.damping[:, None] * (nu - self.nu_i)

    def eval(self, x) -> np.ndarray:
        return self.full_eval(self._full(x))[self.free].ravel()

    def initial_guess(self) -> np.ndarray:
        return (self.nu_i + self.dt * self.nu_dot_prev)[self.free].ravel()

    def jacobian(self, x, step: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, float)
        n = x.size
        J = np.zeros((n, n))
        if self.quadrature == "vertex":
            # Psi_a depends on nu_a only: perturb one component of every node at once
            k = self.model.k
            for j in range(k):
                e = np.zeros(n)
                e[j::k] = step
                col = (self.eval(x + e) - self.eval(x - e)) / (2 * step)
                for r in range(k):
                    rows = np.arange(r, n, k)
                    J[rows, rows - r + j] = col[rows]
            return J
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            J[:, j] = (self.eval(x + e) - self.eval(x - e)) / (2 * step)
        return J


def psi_eval(ctx: PsiContext, nu_trial) -> np.ndarray:
    return ctx.eval(nu_trial)


def monotonicity_ratios(ctx: PsiContext, pairs: int = 100, scale: float = 1.0,
                        rng=None) -> np.ndarray:
    """<Psi(x) - Psi(y), x - y> / |x - y|^2 for random pairs around the predictor."""
    rng = np.random.default_rng(rng)
    base = ctx.initial_guess()
    out = np.empty(pairs)
    for p in range(pairs):
        x = base + scale * rng.standard_normal(base.size)
        y = base + scale * rng.standard_normal(base.size)
        dx = x - y
        out[p] = float((ctx.eval(x) - ctx.eval(y)) @ dx) / float(dx @ dx)
    return out


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def _quadratic_vertex_rate(ctx: PsiContext, rhs_full: np.ndarray) -> np.ndarray:
    """Closed-form rate (nu - nu_i)/dt for quadratic chi under vertex quadrature."""
    m, chi, dt = ctx.model, ctx.chi, ctx.dt
    eta = m.coeffs.damping
    if isinstance(chi, ScalarChi):
        rb = m.coeffs.inertia[:, None]
        return (rb * ctx.nu_dot_prev + rhs_full) / (rb + eta[:, None] * dt)
    Om = chi.inertia_matrix
    w = m.coeffs.weights
    rate = np.zeros_like(ctx.nu_i)
    for a in range(m.n):
        A = w[a] * Om + eta[a] * dt * np.eye(m.k)
        rate[a] = np.linalg.solve(A, w[a] * Om @ ctx.nu_dot_prev[a] + rhs_full[a])
    return rate


def solve_psi(ctx: PsiContext, rhs, tol: float = 1e-12, max_iters: int = 50,
              return_info: bool = False):
    """Return nu(t_{i+1}) on free nodes (flattened) with |Psi(nu) - rhs| <= tol.

    Quadratic co-energies take an exact linear solve. Otherwise a damped
    Newton iteration with a finite-difference Jacobian and backtracking on
    the residual norm is used, falling back to a damped residual step when
    the line search stalls.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    rhs = np.asarray(rhs, dtype=float).ravel()
    chi = ctx.chi
    if chi.quadratic:
        if ctx.quadrature == "vertex":
            full = ctx._full(rhs)
            x = (ctx.nu_i + ctx.dt * _quadratic_vertex_rate(ctx, full))[ctx.free].ravel()
        else:
            b = ctx.eval(np.zeros(ctx.size))
            A = np.column_stack([ctx.eval(e) - b for e in np.eye(ctx.size)])
            x = np.linalg.solve(A, rhs - b)
        res = float(np.linalg.norm(ctx.eval(x) - rhs))
        info = SolveInfo(1, res)
        return (x, info) if return_info else x

    gamma, Xi = chi.constants()
    w = ctx.model.coeffs.weights[ctx.free]
    lip = float(w.max() * (Xi / ctx.dt + Xi) + ctx.model.coeffs.damping.max())
    mono = max(float(w.min() * (gamma / ctx.dt - Xi)), 1e-12)
    alpha_fp = 2.0 / (lip + mono)

    x = ctx.initial_guess()
    r = ctx.eval(x) - rhs
    nr = float(np.linalg.norm(r))
    it = 0
    while nr > tol:
        if it >= max_iters:
            raise PsiSolveError(f"Psi solve did not converge in {max_iters} iterations "
                                f"(residual {nr:.3e}); the step may exceed the monotonicity window",
                                nr)
        it += 1
        try:
            step = -np.linalg.solve(ctx.jacobian(x), r)
        except np.linalg.LinAlgError:
            step = -alpha_fp * r
        a = 1.0
        while True:
            xn = x + a * step
            rn = ctx.eval(xn) - rhs
            nrn = float(np.linalg.norm(rn))
            if nrn <= (1 - 1e-4 * a) * nr or nrn <= tol:
                break
            a *= 0.5
            if a < 1e-8:
                xn = x - alpha_fp * r
                rn = ctx.eval(xn) - rhs
                nrn = float(np.linalg.norm(rn))
                break
        x, r, nr = xn, rn, nrn
    info = SolveInfo(it, nr)
    return (x, info) if return_info else x


def run(mesh=None, material=None, timeset: TimeSet | None = None, init: State | None = None, *,
        model: Model | None = None, quadrature: str = "vertex", tol: float = 1e-12,
        max_iters: int = 50) -> Trajectory:
    model = _as_model(mesh, material, model)
    if not timeset.synchronous:
        raise ValueError("the synchronous integrator needs identical elemental time sets")
    if init is None:
        init = State.zeros(model.n, model.d, model.k, timeset.t0)
    model.check_constraints(init)
    gamma, Xi = model.material.chi.constants()
    T0 = monotonicity_window(gamma, Xi)
    if not model.material.chi.quadratic and timeset.metrics.T >= T0:
        warnings.warn(f"T_theta={timeset.metrics.T:.3g} >= T0={T0:.3g}", stacklevel=2)

    times = timeset.global_times
    m = model.coeffs.mass[:, None]
    free_u, free_nu = model.free_u, model.free_nu
    u, nu = init.u.copy(), init.nu.copy()
    ud, nud = init.u_dot.copy(), init.nu_dot.copy()
    nu_prev = nu.copy()
    rec = [[], [], [], []]
    iters = 0
    vertex_quadratic = model.material.chi.quadratic and quadrature == "vertex"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # window already reported once above
        for i in range(len(times) - 1):
            t, dt = times[i], times[i + 1] - times[i]
            if i > 0:
                fu, fnu = model.global_force(u, nu)
                ud = np.where(free_u, ud - dt * fu / m, ud)
                ctx = PsiContext(model, dt, nu, nu_prev, nud, quadrature)
                if vertex_quadratic:
                    new_rate = _quadratic_vertex_rate(ctx, -dt * fnu)
                else:
                    try:
                        x, info = solve_psi(ctx, (-dt * fnu)[ctx.free].ravel(), tol, max_iters,
                                            return_info=True)
                    except PsiSolveError as exc:
                        raise PsiSolveError(f"t={t!r}: {exc}", exc.residual) from None
                    iters += info.iterations
                    new_rate = (ctx._full(x) - nu) / dt
                nud = np.where(free_nu, new_rate, nud)
            if not (np.all(np.isfinite(ud)) and np.all(np.isfinite(nud))):
                raise IntegrationError(f"non-finite rates at t={t!r}")
            for lst, arr in zip(rec, (u, nu, ud, nud)):
                lst.append(arr.copy())
            nu_prev = nu
            u = u + dt * ud
            nu = nu + dt * nud
    for lst, arr in zip(rec, (u, nu, ud, nud)):
        lst.append(arr.copy())

    U, N, UD, ND = (np.array(x) for x in rec)
    nodes = [NodeHistory(times.copy(), U[:, a], N[:, a], UD[:, a], ND[:, a]) for a in range(model.n)]
    return Trajectory(model, timeset, nodes, "sync", quadrature,
                      (len(times) - 2) * model.mesh.n_elements, {"psi_iterations": iters})
