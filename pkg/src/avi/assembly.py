"""Exact element integrals of the quadratic potential and the resulting nodal forces.

Every element contributes a quadratic polynomial in its nodal values,

    V_K(x_K) = 1/2 x_K . H_K x_K + l_K . x_K + c_K,

with ``x_K = (u_a for a in K, nu_a for a in K)``. Because the fields are
affine on K, the integrals are evaluated exactly with the simplex moments
int N_a = |K|/(d+1) and int N_a N_b = |K|(1 + delta_ab)/((d+1)(d+2)).
Forces are the gradients ``H_K x_K + l_K``; the integrators subtract
``dt * force / mass``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .material import Material
from .mesh import Marker, Mesh, NodalCoefficients, lumped_coefficients


@dataclass
class State:
    """Nodal values and right-limit rates with per-node last-update times."""

    u: np.ndarray
    nu: np.ndarray
    u_dot: np.ndarray
    nu_dot: np.ndarray
    t: float = 0.0
    last: np.ndarray | None = None

    def __post_init__(self):
        for name in ("u", "nu", "u_dot", "nu_dot"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))
        if self.last is None:
            self.last = np.full(len(self.u), float(self.t))

    @classmethod
    def zeros(cls, n: int, d: int, k: int, t: float = 0.0) -> "State":
        return cls(np.zeros((n, d)), np.zeros((n, k)), np.zeros((n, d)), np.zeros((n, k)), t)

    def positions_at(self, t: float, nodes=None):
        idx = slice(None) if nodes is None else np.asarray(nodes)
        dt = (t - self.last[idx])[:, None]
        return self.u[idx] + dt * self.u_dot[idx], self.nu[idx] + dt * self.nu_dot[idx]

    def copy(self) -> "State":
        return State(self.u.copy(), self.nu.copy(), self.u_dot.copy(), self.nu_dot.copy(),
                     self.t, self.last.copy())


def _element_blocks(mesh: Mesh, material: Material, K: int):
    d, k = mesh.dim, material.k
    nloc = d + 1
    nK = nloc * (d + k)
    g = mesh.gradients[K]
    vol = mesh.volumes[K]
    rho = material.rho
    nxi = d * d + k + k * d
    off_nu = nloc * d

    G = np.zeros((nxi, nK))
    for a in range(nloc):
        for i in range(d):
            G[i * d:(i + 1) * d, a * d + i] = g[a]
        for i in range(k):
            r = d * d + k + i * d
            G[r:r + d, off_nu + a * k + i] = g[a]
    E = np.zeros((nloc, nxi, nK))
    P = np.zeros((nloc, d + k, nK))
    for a in range(nloc):
        for i in range(k):
            E[a, d * d + i, off_nu + a * k + i] = 1.0
            P[a, d + i, off_nu + a * k + i] = 1.0
        for i in range(d):
            P[a, i, a * d + i] = 1.0

    m1 = vol / nloc
    M2 = vol / (nloc * (nloc + 1)) * (np.ones((nloc, nloc)) + np.eye(nloc))
    Q = 0.5 * (material.elastic.Q + material.elastic.Q.T)
    S = vol * G.T @ Q @ G
    for a in range(nloc):
        cross = G.T @ Q @ E[a]
        S += m1 * (cross + cross.T)
        for b in range(nloc):
            S += M2[a, b] * E[a].T @ Q @ E[b]

    w = material.potential
    W = 0.5 * (w.W + w.W.T)
    Hw = sum(M2[a, b] * P[a].T @ W @ P[b] for a in range(nloc) for b in range(nloc))
    H = 2.0 * rho * S + rho * Hw
    lvec = rho * m1 * sum(P[a].T @ w.g for a in range(nloc))
    c = rho * w.w0 * vol
    return H, lvec, c


@dataclass(eq=False)
class Model:
    """Mesh + material with precomputed lumped coefficients and element matrices."""

    mesh: Mesh
    material: Material
    coeffs: NodalCoefficients = field(init=False)

    def __post_init__(self):
        if self.material.d != self.mesh.dim:
            raise ValueError(f"material is {self.material.d}-d, mesh is {self.mesh.dim}-d")
        if self.material.k != self.mesh.k:
            raise ValueError(f"material has k={self.material.k}, mesh header k={self.mesh.k}")
        known = {tuple(sorted(f)) for f in self.mesh.facets_with(Marker.TRACTION)}
        for f in self.material.traction:
            if f not in known:
                raise ValueError(f"traction given on facet {f} which carries no traction marker")
        self.coeffs = lumped_coefficients(self.mesh, self.material.rho, self.material.rho_bar,
                                          self.material.eta)
        self.H, self.l, self.c = self._precompute()

    @property
    def d(self) -> int:
        return self.mesh.dim

    @property
    def k(self) -> int:
        return self.material.k

    @property
    def n(self) -> int:
        return self.mesh.n_nodes

    @property
    def ndof(self) -> int:
        return self.n * (self.d + self.k)

    def _precompute(self):
        mesh, mat = self.mesh, self.material
        blocks = [_element_blocks(mesh, mat, K) for K in range(mesh.n_elements)]
        H = np.array([b[0] for b in blocks])
        lv = np.array([b[1] for b in blocks])
        c = np.array([b[2] for b in blocks])
        d = self.d
        for facet, t in mat.traction.items():
            K = mesh.facet_element(facet)
            share = mesh.facet_measure(facet) / d
            for a in facet:
                la = mesh.local_index(K, a)
                lv[K, la * d:(la + 1) * d] -= share * t
        return H, lv, c

    @cached_property
    def dofs(self) -> np.ndarray:
        """Global dof indices of each element's local vector, shape (m, (d+1)(d+k))."""
        d, k, n = self.d, self.k, self.n
        el = self.mesh.elements
        u_dofs = (el[:, :, None] * d + np.arange(d)).reshape(len(el), -1)
        nu_dofs = (n * d + el[:, :, None] * k + np.arange(k)).reshape(len(el), -1)
        return np.hstack([u_dofs, nu_dofs])

    @cached_property
    def stiffness(self) -> np.ndarray:
        Kg = np.zeros((self.ndof, self.ndof))
        for K, idx in enumerate(self.dofs):
            Kg[np.ix_(idx, idx)] += self.H[K]
        return Kg

    @cached_property
    def linear_load(self) -> np.ndarray:
        lg = np.zeros(self.ndof)
        for K, idx in enumerate(self.dofs):
            np.add.at(lg, idx, self.l[K])
        return lg

    @cached_property
    def free_u(self) -> np.ndarray:
        return np.repeat(~self.mesh.fixed_u_nodes[:, None], self.d, axis=1)

    @cached_property
    def free_nu(self) -> np.ndarray:
        return np.repeat(~self.mesh.fixed_nu_nodes[:, None], self.k, axis=1)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.concatenate([self.free_u.ravel(), self.free_nu.ravel()])

    def pack(self, u, nu) -> np.ndarray:
        return np.concatenate([np.asarray(u, float).ravel(), np.asarray(nu, float).ravel()])

    def unpack(self, x):
        nd = self.n * self.d
        return x[:nd].reshape(self.n, self.d), x[nd:].reshape(self.n, self.k)

    def local_vector(self, K: int, u_K, nu_K) -> np.ndarray:
        return np.concatenate([np.asarray(u_K, float).ravel(), np.asarray(nu_K, float).ravel()])

    def element_force(self, K: int, u_K, nu_K):
        """Forces (d+1, d) and (d+1, k) on the vertices of K for its local nodal values."""
        f = self.H[K] @ self.local_vector(K, u_K, nu_K) + self.l[K]
        nd = (self.d + 1) * self.d
        return f[:nd].reshape(self.d + 1, self.d), f[nd:].reshape(self.d + 1, self.k)

    def element_potential(self, K: int, u_K, nu_K) -> float:
        x = self.local_vector(K, u_K, nu_K)
        return float(0.5 * x @ self.H[K] @ x + self.l[K] @ x + self.c[K])

    def global_force(self, u, nu):
        return self.unpack(self.stiffness @ self.pack(u, nu) + self.linear_load)

    def potential(self, u, nu) -> float:
        x = self.pack(u, nu)
        return float(0.5 * x @ self.stiffness @ x + self.linear_load @ x + self.c.sum())

    def check_constraints(self, state: State, atol: float = 0.0):
        for name, arr, free in (("u", state.u, self.free_u), ("nu", state.nu, self.free_nu),
                                ("u_dot", state.u_dot, self.free_u),
                                ("nu_dot", state.nu_dot, self.free_nu)):
            if np.any(np.abs(arr[~free]) > atol):
                raise ValueError(f"initial {name} is nonzero on a constrained node")


def precompute(mesh: Mesh, material: Material) -> Model:
    return Model(mesh, material)


def force_u(model: Model, K: int, state: State, t_eval: float | None = None) -> np.ndarray:
    nodes = model.mesh.elements[K]
    u, nu = state.positions_at(state.t if t_eval is None else t_eval, nodes)
    return model.element_force(K, u, nu)[0]


def force_nu(model: Model, K: int, state: State, t_eval: float | None = None) -> np.ndarray:
    nodes = model.mesh.elements[K]
    u, nu = state.positions_at(state.t if t_eval is None else t_eval, nodes)
    return model.element_force(K, u, nu)[1]


def potential_V(model: Model, state: State, t_eval: float | None = None) -> float:
    u, nu = state.positions_at(state.t if t_eval is None else t_eval)
    return model.potential(u, nu)
