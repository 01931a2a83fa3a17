"""Exact reference solutions of the semidiscrete linear problem.

For quadratic data the semidiscrete equations are the linear ODE

    M x'' = -K x - C x' + f,    x = (u, nu),

on the unconstrained channels. The oracle integrates it exactly through
the exponential of the augmented first-order matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Model, State
from .material import GeneralChi


@dataclass(eq=False)
class LinearSystem:
    M: np.ndarray  # full (ndof, ndof)
    C: np.ndarray
    K: np.ndarray
    f: np.ndarray
    free: np.ndarray  # bool mask over dofs
    model: Model

    def reduced(self):
        i = self.free
        return (self.M[np.ix_(i, i)], self.C[np.ix_(i, i)], self.K[np.ix_(i, i)], self.f[i])

    def energy(self, x, v) -> float:
        """1/2 v.Mv + 1/2 x.Kx (no load)."""
        return float(0.5 * v @ self.M @ v + 0.5 * x @ self.K @ x)

    def frequencies(self) -> np.ndarray:
        M, _, K, _ = self.reduced()
        L = np.linalg.cholesky(M)
        Li = np.linalg.inv(L)
        ev = np.linalg.eigvalsh(Li @ K @ Li.T)
        return np.sqrt(np.clip(ev, 0.0, None))

    def modes(self):
        """Generalized eigenpairs K phi = omega^2 M phi on free channels (phi M-normalized)."""
        M, _, K, _ = self.reduced()
        L = np.linalg.cholesky(M)
        Li = np.linalg.inv(L)
        ev, V = np.linalg.eigh(Li @ K @ Li.T)
        return np.sqrt(np.clip(ev, 0.0, None)), Li.T @ V


def assemble(mesh=None, material=None, *, model: Model | None = None) -> LinearSystem:
    if model is None:
        model = Model(mesh, material)
    chi = model.material.chi
    if isinstance(chi, GeneralChi):
        raise ValueError("no linear oracle exists for a general (non-quadratic) co-energy")
    n, d, k = model.n, model.d, model.k
    nd = n * d
    M = np.zeros((model.ndof, model.ndof))
    M[:nd, :nd] = np.diag(np.repeat(model.coeffs.mass, d))
    inertia = chi.inertia_matrix
    w = model.coeffs.weights
    for a in range(n):
        s = nd + a * k
        M[s:s + k, s:s + k] = w[a] * inertia
    C = np.zeros_like(M)
    C[nd:, nd:] = np.diag(np.repeat(model.coeffs.damping, k))
    return LinearSystem(M, C, model.stiffness.copy(), -model.linear_load, model.free_dofs, model)


# -- matrix exponential -----------------------------------------------------------

_PADE6 = (1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)


def expm(A: np.ndarray) -> np.ndarray:
    """exp(A) by scaling and squaring with the diagonal (6,6) Pade approximant."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    nrm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(nrm / 0.5))) + 1) if nrm > 0.5 else 0
    X = A / 2.0 ** s
    I = np.eye(n)
    P = np.zeros_like(X)
    Qm = np.zeros_like(X)
    Xp = I
    for j, c in enumerate(_PADE6):
        if j:
            Xp = Xp @ X
        P += c * Xp
        Qm += (-1) ** j * c * Xp
    E = np.linalg.solve(Qm, P)
    for _ in range(s):
        E = E @ E
    return E


def _augmented(sys: LinearSystem) -> np.ndarray:
    M, C, K, f = sys.reduced()
    p = M.shape[0]
    Mi = np.linalg.inv(M)
    A = np.zeros((2 * p + 1, 2 * p + 1))
    A[:p, p:2 * p] = np.eye(p)
    A[p:2 * p, :p] = -Mi @ K
    A[p:2 * p, p:2 * p] = -Mi @ C
    A[p:2 * p, -1] = Mi @ f
    return A


def exact_solution(sys: LinearSystem, init: State, times) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities (T, ndof) of the exact semidiscrete motion at ``times``.

    Constrained channels are removed before exponentiation and come back as zeros.
    """
    model = sys.model
    free = sys.free
    x0 = model.pack(init.u, init.nu)
    v0 = model.pack(init.u_dot, init.nu_dot)
    if np.any(x0[~free]) or np.any(v0[~free]):
        raise ValueError("constrained channels must be zero in the initial data")
    A = _augmented(sys)
    p = int(free.sum())
    z0 = np.concatenate([x0[free], v0[free], [1.0]])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    X = np.zeros((len(times), model.ndof))
    V = np.zeros((len(times), model.ndof))
    for i, t in enumerate(times):
        tau = t - init.t
        z = z0 if tau == 0 else expm(tau * A) @ z0
        X[i, free] = z[:p]
        V[i, free] = z[p:2 * p]
    return X, V


def finite_difference_gradient(f, x, step: float = 1e-5) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g
