"""Quadratic elastic and external potentials, tractions and kinetic co-energies.

The elastic density acts on the stacked vector ``xi = (vec U, nu, vec N)``
where ``U`` is the d x d displacement gradient, ``nu`` the k-vector
descriptor and ``N`` its k x d gradient; both matrices are flattened
row-major. ``e(xi) = xi . Q xi`` (no factor 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class AssumptionError(ValueError):
    """Raised when a material violates one of the structural assumptions."""


def xi_size(d: int, k: int) -> int:
    return d * d + k + k * d


@dataclass(frozen=True, eq=False)
class ElasticForm:
    Q: np.ndarray
    d: int
    k: int

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        n = xi_size(self.d, self.k)
        if Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n} for d={self.d}, k={self.k}; got {Q.shape}")
        object.__setattr__(self, "Q", Q)

    @classmethod
    def isotropic(cls, d: int, k: int, lam: float, mu: float, kappa: float, beta: float,
                  couple: float = 0.0) -> "ElasticForm":
        """e = mu|U|^2 + lam (tr U)^2 + kappa|nu|^2 + beta|N|^2 + 2 couple tr(U) sum(nu)."""
        n = xi_size(d, k)
        Q = np.zeros((n, n))
        dd = d * d
        Q[:dd, :dd] = mu * np.eye(dd)
        trace_idx = [i * d + i for i in range(d)]
        Q[np.ix_(trace_idx, trace_idx)] += lam
        Q[dd:dd + k, dd:dd + k] = kappa * np.eye(k)
        Q[dd + k:, dd + k:] = beta * np.eye(k * d)
        for i in trace_idx:
            Q[i, dd:dd + k] = couple
            Q[dd:dd + k, i] = couple
        return cls(Q, d, k)

    @property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.Q, self.Q.T, rtol=0.0, atol=1e-12))

    @property
    def bounds(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))
        return float(ev[0]), float(ev[-1])

    def stack(self, U, nu, N) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        nu = np.asarray(nu, dtype=float)
        N = np.asarray(N, dtype=float)
        if U.shape != (self.d, self.d) or nu.shape != (self.k,) or N.shape != (self.k, self.d):
            raise ValueError(
                f"expected U {(self.d, self.d)}, nu {(self.k,)}, N {(self.k, self.d)}; "
                f"got {U.shape}, {nu.shape}, {N.shape}"
            )
        return np.concatenate([U.ravel(), nu, N.ravel()])

    def value(self, U, nu, N) -> float:
        xi = self.stack(U, nu, N)
        return float(xi @ self.Q @ xi)


def elastic_partials(e: ElasticForm, U, nu, N):
    """Return (d_F e, d_nu e, d_N e) as arrays shaped like U, nu, N."""
    xi = e.stack(U, nu, N)
    g = (e.Q + e.Q.T) @ xi
    d, k = e.d, e.k
    return g[: d * d].reshape(d, d), g[d * d: d * d + k], g[d * d + k:].reshape(k, d)


@dataclass(frozen=True, eq=False)
class ExternalPotential:
    """w(z) = 1/2 z.W z + g.z + w0 on z = (u, nu)."""

    W: np.ndarray
    g: np.ndarray
    w0: float | None = None

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        if W.shape != (g.size, g.size):
            raise ValueError(f"W must be {g.size}x{g.size}, got {W.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "g", g)
        if self.w0 is None:
            object.__setattr__(self, "w0", self._default_offset())

    @classmethod
    def zero(cls, d: int, k: int) -> "ExternalPotential":
        return cls(np.zeros((d + k, d + k)), np.zeros(d + k), 0.0)

    def _default_offset(self) -> float:
        # smallest offset making w >= 0 when W is positive definite; 0 otherwise
        if not np.any(self.g):
            return 0.0
        try:
            np.linalg.cholesky(0.5 * (self.W + self.W.T))
        except np.linalg.LinAlgError:
            return 0.0
        return float(0.5 * self.g @ np.linalg.solve(self.W, self.g))

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.W @ z + self.g @ z + self.w0)

    def gradient(self, z) -> np.ndarray:
        return 0.5 * (self.W + self.W.T) @ np.asarray(z, dtype=float) + self.g

    @property
    def growth_constant(self) -> float:
        # |grad w| <= |W||z| + |g| <= max(|W|, |g|)(1 + |u| + |nu|)
        return float(max(np.linalg.norm(self.W, 2), np.linalg.norm(self.g)))


# -- kinetic co-energies -----------------------------------------------------------


class ScalarChi:
    """chi = 1/2 rho_bar |rate|^2."""

    quadratic = True

    def __init__(self, rho_bar: float, k: int):
        if rho_bar <= 0:
            raise ValueError(f"rho_bar must be positive, got {rho_bar}")
        self.rho_bar = float(rho_bar)
        self.k = k

    @property
    def inertia_matrix(self) -> np.ndarray:
        return self.rho_bar * np.eye(self.k)

    def value(self, nu, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * self.rho_bar * np.sum(z * z, axis=-1)

    def d_nu(self, nu, z):
        return np.zeros(np.broadcast_shapes(np.shape(nu), np.shape(z)))

    def d_rate(self, nu, z):
        return self.rho_bar * np.asarray(z, dtype=float)

    def hessian(self, nu, z):
        H = np.zeros((2 * self.k, 2 * self.k))
        H[self.k:, self.k:] = self.inertia_matrix
        return H

    def constants(self) -> tuple[float, float]:
        return self.rho_bar, self.rho_bar

    def __repr__(self):
        return f"ScalarChi(rho_bar={self.rho_bar})"


class MatrixChi:
    """chi = 1/2 Omega rate . rate with Omega symmetric positive definite."""

    quadratic = True

    def __init__(self, Omega):
        Om = np.atleast_2d(np.asarray(Omega, dtype=float))
        if Om.shape[0] != Om.shape[1]:
            raise ValueError("Omega must be square")
        if not np.allclose(Om, Om.T, atol=1e-12):
            raise ValueError("Omega must be symmetric")
        if np.linalg.eigvalsh(Om)[0] <= 0:
            raise ValueError("Omega must be positive definite")
        self.Omega = Om
        self.k = Om.shape[0]

    @property
    def inertia_matrix(self) -> np.ndarray:
        return self.Omega

    def value(self, nu, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.Omega, z)

    def d_nu(self, nu, z):
        return np.zeros(np.broadcast_shapes(np.shape(nu), np.shape(z)))

    def d_rate(self, nu, z):
        return np.asarray(z, dtype=float) @ self.Omega

    def hessian(self, nu, z):
        H = np.zeros((2 * self.k, 2 * self.k))
        H[self.k:, self.k:] = self.Omega
        return H

    def constants(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.Omega)
        return float(ev[0]), float(ev[-1])

    def __repr__(self):
        return f"MatrixChi(Omega={self.Omega.tolist()})"


@dataclass(eq=False)
class GeneralChi:
    """User-supplied co-energy with declared convexity/curvature constants.

    The callables must broadcast over leading axes: ``value(nu, z)`` maps
    (..., k) x (..., k) to (...), the partials map to (..., k).
    """

    value_fn: Callable
    d_nu_fn: Callable
    d_rate_fn: Callable
    k: int
    gamma: float
    Xi: float
    box: float = 3.0
    samples: int = 200
    name: str = "general"
    hessian_fn: Callable | None = None

    quadratic = False

    def value(self, nu, z):
        return self.value_fn(np.asarray(nu, float), np.asarray(z, float))

    def d_nu(self, nu, z):
        return self.d_nu_fn(np.asarray(nu, float), np.asarray(z, float))

    def d_rate(self, nu, z):
        return self.d_rate_fn(np.asarray(nu, float), np.asarray(z, float))

    def hessian(self, nu, z, step: float = 1e-5):
        """Hessian in (nu, rate) order; central differences of the gradient if not supplied."""
        if self.hessian_fn is not None:
            return self.hessian_fn(np.asarray(nu, float), np.asarray(z, float))
        k = self.k
        x = np.concatenate([nu, z]).astype(float)
        H = np.empty((2 * k, 2 * k))
        for j in range(2 * k):
            e = np.zeros(2 * k)
            e[j] = step
            gp = np.concatenate([self.d_nu(x[:k] + e[:k], x[k:] + e[k:]),
                                 self.d_rate(x[:k] + e[:k], x[k:] + e[k:])])
            gm = np.concatenate([self.d_nu(x[:k] - e[:k], x[k:] - e[k:]),
                                 self.d_rate(x[:k] - e[:k], x[k:] - e[k:])])
            H[:, j] = (gp - gm) / (2 * step)
        return 0.5 * (H + H.T)

    def constants(self) -> tuple[float, float]:
        return self.gamma, self.Xi

    def __repr__(self):
        return f"GeneralChi({self.name}, gamma={self.gamma}, Xi={self.Xi})"


def tanh_coupled_chi(k: int, c0: float = 1.3, alpha: float = 0.3, beta: float = 0.3,
                     delta: float = 0.3, gamma: float = 1.0, Xi: float = 2.0, **kw) -> GeneralChi:
    """Smooth non-quadratic co-energy, per component j:

        1/2 c0 z^2 + alpha log cosh z + beta (1 - cos nu) + delta (sin nu tanh z + 1)

    Its rate-rate curvature lies in [c0 - 0.77 delta, c0 + alpha + 0.77 delta]
    and every second derivative is bounded, so finite Hessian-bound and convexity constants exist.
    """

    def value(nu, z):
        return np.sum(0.5 * c0 * z * z + alpha * np.log(np.cosh(z)) + beta * (1 - np.cos(nu))
                      + delta * (np.sin(nu) * np.tanh(z) + 1.0), axis=-1)

    def d_nu(nu, z):
        return beta * np.sin(nu) + delta * np.cos(nu) * np.tanh(z)

    def d_rate(nu, z):
        return c0 * z + alpha * np.tanh(z) + delta * np.sin(nu) / np.cosh(z) ** 2

    def hessian(nu, z):
        sech2 = 1.0 / np.cosh(z) ** 2
        h_nn = beta * np.cos(nu) - delta * np.sin(nu) * np.tanh(z)
        h_nz = delta * np.cos(nu) * sech2
        h_zz = c0 + alpha * sech2 - 2 * delta * np.sin(nu) * sech2 * np.tanh(z)
        H = np.zeros((2 * k, 2 * k))
        idx = np.arange(k)
        H[idx, idx] = h_nn
        H[idx, k + idx] = h_nz
        H[k + idx, idx] = h_nz
        H[k + idx, k + idx] = h_zz
        return H

    return GeneralChi(value, d_nu, d_rate, k, gamma, Xi, name="tanh_coupled",
                      hessian_fn=hessian, **kw)


GENERAL_CHI_MODELS: dict[str, Callable[..., GeneralChi]] = {
    "tanh_coupled": tanh_coupled_chi,
}


def chi_partials(chi, nu, rate):
    """Return (chi value, d_nu chi, d_rate chi) for one point."""
    nu = np.asarray(nu, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if nu.shape != (chi.k,) or rate.shape != (chi.k,):
        raise ValueError(f"expected vectors of length {chi.k}, got {nu.shape} and {rate.shape}")
    return float(chi.value(nu, rate)), chi.d_nu(nu, rate), chi.d_rate(nu, rate)


# -- bundled material ------------------------------------------------------------


@dataclass(eq=False)
class Material:
    """Everything constitutive: densities, potentials, tractions, dissipation, co-energy.

    ``traction`` maps a boundary facet (tuple of node indices, any order) to a
    constant force per unit area.
    """

    elastic: ElasticForm
    chi: object
    rho: float = 1.0
    eta: float = 0.0
    potential: ExternalPotential | None = None
    traction: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"dissipation coefficient eta must be >= 0, got {self.eta}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.chi.k != self.k:
            raise ValueError(f"co-energy acts on k={self.chi.k}, elastic form on k={self.k}")
        if self.potential is None:
            self.potential = ExternalPotential.zero(self.d, self.k)
        if self.potential.g.size != self.d + self.k:
            raise ValueError("external potential must act on (u, nu) of size d + k")
        self.traction = {tuple(sorted(int(i) for i in f)): np.asarray(t, dtype=float)
                         for f, t in self.traction.items()}
        for f, t in self.traction.items():
            if t.shape != (self.d,):
                raise ValueError(f"traction on facet {f} must be a {self.d}-vector")

    @property
    def d(self) -> int:
        return self.elastic.d

    @property
    def k(self) -> int:
        return self.elastic.k

    @property
    def rho_bar(self) -> float:
        """Scalar substructural inertia density used for lumping (1 for non-scalar co-energies)."""
        return self.chi.rho_bar if isinstance(self.chi, ScalarChi) else 1.0


# -- assumption checks -------------------------------------------------------------


@dataclass
class AssumptionReport:
    lam: float
    Lam: float
    Xi1: float
    gamma: float
    Xi: float
    Xi2: float
    T0: float
    lines: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.lines)

    def failures(self) -> list[str]:
        return [f"{name}: {msg}" for name, ok, msg in self.lines if not ok]

    def raise_if_failed(self):
        if not self.ok:
            raise AssumptionError("; ".join(self.failures()))

    def format(self) -> str:
        out = [f"{'PASS' if ok else 'FAIL'} {name}: {msg}" for name, ok, msg in self.lines]
        out.append(
            f"constants lambda={self.lam:.6g} Lambda={self.Lam:.6g} Xi1={self.Xi1:.6g} "
            f"gamma={self.gamma:.6g} Xi={self.Xi:.6g} Xi2={self.Xi2:.6g} T0={self.T0:.6g}"
        )
        return "\n".join(out)


def monotonicity_window(gamma: float, Xi: float) -> float:
    return 2.0 * gamma / (2.0 * Xi + gamma)


def growth_constant_chi(chi, gamma: float, Xi: float) -> float:
    """Taylor-type constant for the growth bounds of chi around the origin.

    Covers |d_nu chi| + |d_rate chi| <= Xi2 (1 + |nu| + |z|),
    chi <= Xi2 (1 + |nu|^2 + |z|^2) and
    chi >= gamma/4 |z|^2 - Xi2 (1 + |nu|^2).
    """
    k = chi.k
    zero = np.zeros(k)
    c0 = float(chi.value(zero, zero))
    g0 = float(np.linalg.norm(np.concatenate([chi.d_nu(zero, zero), chi.d_rate(zero, zero)])))
    cands = [
        np.sqrt(2.0) * max(g0, Xi),
        c0 + 0.5 * g0,
        0.5 * g0 + 0.5 * Xi,
        -c0 + 0.5 * g0 + 2.0 * g0 ** 2 / gamma,
        0.5 * g0 + 0.5 * Xi + 2.0 * Xi ** 2 / gamma,
    ]
    return float(max(cands))


def validate_assumptions(material: Material, mesh=None, *, samples: int | None = None,
                         box: float | None = None, seed: int = 0,
                         strict: bool = False) -> AssumptionReport:
    """Compute the structural constants and check each assumption.

    Quadratic parts use eigenvalue bounds. A general co-energy is checked by
    sampling its Hessian on the cube [-box, box]^(2k) against the declared
    constants.
    """
    lines: list[tuple[str, bool, str]] = []
    e = material.elastic
    sym = e.symmetric
    lines.append(("A1 symmetry", sym, "Q symmetric" if sym else
                  f"Q not symmetric (max |Q-Q^T| = {np.abs(e.Q - e.Q.T).max():.3e})"))
    lam, Lam = e.bounds
    lines.append(("A1 coercivity", lam > 0, f"lambda={lam:.6g}, Lambda={Lam:.6g}"
                  + ("" if lam > 0 else " (lambda <= 0: e is not coercive)")))

    w = material.potential
    Xi1 = w.growth_constant
    wsym = bool(np.allclose(w.W, w.W.T, atol=1e-12))
    lines.append(("A2 growth", wsym and np.isfinite(Xi1), f"Xi1={Xi1:.6g}"))

    tr_ok = all(np.all(np.isfinite(t)) for t in material.traction.values())
    msg = f"{len(material.traction)} traction facet(s)"
    if mesh is not None:
        from .mesh import Marker

        marked = {tuple(sorted(f)) for f in mesh.facets_with(Marker.TRACTION)}
        stray = [f for f in material.traction if f not in marked]
        if stray:
            tr_ok = False
            msg += f"; facets without traction marker: {stray}"
    lines.append(("A3 traction", tr_ok, msg))
    lines.append(("dissipativity", material.eta >= 0, f"eta={material.eta:.6g}"))

    chi = material.chi
    gamma, Xi = chi.constants()
    rng = np.random.default_rng(seed)
    if chi.quadratic:
        lines.append(("A4 curvature", True, f"Xi={Xi:.6g} (exact)"))
        lines.append(("A5 convexity", gamma > 0, f"gamma={gamma:.6g} (exact)"))
    else:
        n = samples if samples is not None else chi.samples
        B = box if box is not None else chi.box
        worst_norm, worst_conv = 0.0, np.inf
        k = chi.k
        for _ in range(n):
            x = rng.uniform(-B, B, size=2 * k)
            H = chi.hessian(x[:k], x[k:])
            worst_norm = max(worst_norm, float(np.linalg.norm(H, 2)))
            worst_conv = min(worst_conv, float(np.linalg.eigvalsh(H[k:, k:])[0]))
        tol = 1e-9
        lines.append(("A4 curvature", worst_norm <= Xi + tol,
                      f"sampled max |Hessian| = {worst_norm:.6g} vs declared Xi={Xi:.6g}"))
        lines.append(("A5 convexity", worst_conv >= gamma - tol and gamma > 0,
                      f"sampled min rate-curvature = {worst_conv:.6g} vs declared gamma={gamma:.6g}"))
    Xi2 = growth_constant_chi(chi, gamma, Xi) if gamma > 0 else float("inf")
    T0 = monotonicity_window(gamma, Xi) if gamma > 0 else 0.0
    report = AssumptionReport(lam, Lam, Xi1, gamma, Xi, Xi2, T0, lines)
    if strict:
        report.raise_if_failed()
    return report
