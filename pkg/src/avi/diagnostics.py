"""Energies, discrete action, pointwise variation and convergence studies."""

from __future__ import annotations

import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import integrate_avi, integrate_sync, oracle
from .assembly import Model, State
from .integrate_sync import gauss_rule
from .trajectory import Trajectory


# -- energies --------------------------------------------------------------------


@dataclass(frozen=True)
class Energy:
    kinetic_u: float
    kinetic_nu: float
    potential: float

    @property
    def total(self) -> float:
        return self.kinetic_u + self.kinetic_nu + self.potential


def chi_integral(model: Model, nu, nu_dot, quadrature: str = "vertex") -> float:
    chi = model.material.chi
    if quadrature == "vertex":
        return float(model.coeffs.weights @ chi.value(nu, nu_dot))
    lam, wq = gauss_rule(model.d)
    el, vol = model.mesh.elements, model.mesh.volumes
    vals = chi.value(lam @ nu[el], lam @ nu_dot[el])  # (m, q)
    return float(np.sum(vals * wq * vol[:, None]))


def energy_of(model: Model, u, nu, u_dot, nu_dot, quadrature: str = "vertex") -> Energy:
    ku = 0.5 * float(model.coeffs.mass @ np.sum(u_dot * u_dot, axis=1))
    return Energy(ku, chi_integral(model, nu, nu_dot, quadrature), model.potential(u, nu))


def energy(traj: Trajectory, t: float) -> Energy:
    if not (traj.t0 <= t <= traj.tf):
        raise ValueError(f"t={t} outside [{traj.t0}, {traj.tf}]")
    U, N = traj.values_at([t])
    UD, ND = traj.rates_at([t])
    return energy_of(traj.model, U[0], N[0], UD[0], ND[0], traj.quadrature)


def energy_series(traj: Trajectory, times=None) -> tuple[np.ndarray, np.ndarray]:
    """Total energy at ``times`` (default: the global time set without t_f)."""
    if times is None:
        times = traj.timeset.global_times[:-1]
    U, N = traj.values_at(times)
    UD, ND = traj.rates_at(times)
    E = np.array([energy_of(traj.model, U[i], N[i], UD[i], ND[i], traj.quadrature).total
                  for i in range(len(times))])
    return np.asarray(times), E


def energy_trend(times, E) -> tuple[float, float]:
    """(least-squares slope, largest rise above the running minimum)."""
    slope = float(np.polyfit(times, E, 1)[0])
    rise = float(np.max(E - np.minimum.accumulate(E)))
    return slope, rise


# -- action and dissipation ---------------------------------------------------------


def discrete_action(traj: Trajectory) -> float:
    """Sum over elements and elemental intervals of kinetic minus left-endpoint potential."""
    model, theta = traj.model, traj.timeset
    mesh = model.mesh
    mK = model.coeffs.element_mass
    ew = model.coeffs.element_weights
    chi = model.material.chi
    total = 0.0
    for K, tk in enumerate(theta.element_times):
        verts = mesh.elements[K]
        for a in verts:
            h = traj.nodes[a]
            dt = np.diff(h.times)
            ts = h.times[:-1]
            ke_u = 0.5 * mK[K] * dt * np.sum(h.u_dot[:-1] ** 2, axis=1)
            ke_nu = ew[K] * dt * chi.value(h.nu[:-1], h.nu_dot[:-1])
            # every nodal instant in [t_K^0, t_K^N) belongs to exactly one elemental interval
            inside = (ts >= tk[0]) & (ts < tk[-1])
            total += float(np.sum((ke_u + ke_nu)[inside]))
        U, N = traj.values_at(tk[:-1])
        for j in range(len(tk) - 1):
            total -= (tk[j + 1] - tk[j]) * model.element_potential(K, U[j, verts], N[j, verts])
    return total


def pointwise_variation(traj: Trajectory, channel: str, t1: float | None = None,
                        t2: float | None = None) -> float:
    """Sum of |rate jump| over instants t_a^i with [t_a^{i-1}, t_a^i] meeting [t1, t2]."""
    t1 = traj.t0 if t1 is None else t1
    t2 = traj.tf if t2 is None else t2
    if not (traj.t0 <= t1 <= t2 <= traj.tf):
        raise ValueError(f"invalid window [{t1}, {t2}] for interval [{traj.t0}, {traj.tf}]")
    if channel not in ("u", "nu"):
        raise ValueError("channel must be 'u' or 'nu'")
    total = 0.0
    for h in traj.nodes:
        r = h.u_dot if channel == "u" else h.nu_dot
        # jumps happen at interior instants 1..N-2 (the last instant is t_f)
        idx = np.arange(1, len(h.times) - 1)
        if idx.size == 0:
            continue
        keep = (h.times[idx - 1] <= t2) & (h.times[idx] >= t1)
        jumps = np.linalg.norm(r[idx] - r[idx - 1], axis=1)
        total += float(jumps[keep].sum())
    return total


def dissipation_pair(times_per_node, nu, phi, weights, eta: float):
    """(semidiscrete, fully discrete) dissipation of piecewise-affine nodal paths.

    ``nu[a]``, ``phi[a]`` hold nodal values (N_a+1, k) at ``times_per_node[a]``;
    the dissipation coefficient of node a is eta * weights[a].
    """
    cont = disc = 0.0
    for a, ts in enumerate(times_per_node):
        dnu = np.diff(nu[a], axis=0)
        ea = eta * weights[a]
        cont += ea * float(np.sum(dnu * 0.5 * (phi[a][1:] + phi[a][:-1])))
        disc += ea * float(np.sum(dnu * phi[a][:-1]))
    return cont, disc


def dissipation_bound(times_per_node, nu, phi, weights, eta: float, T: float) -> float:
    """(eta T / 2) |int nu_dot . phi_dot| with lumped spatial weights."""
    s = 0.0
    for a, ts in enumerate(times_per_node):
        dt = np.diff(ts)[:, None]
        s += weights[a] * float(np.sum(np.diff(nu[a], axis=0) * np.diff(phi[a], axis=0) / dt))
    return 0.5 * eta * T * abs(s)


def dissipation_bound_abs(times_per_node, nu, phi, weights, eta: float, T: float) -> float:
    """(eta T / 2) int |nu_dot . phi_dot| with lumped spatial weights."""
    s = 0.0
    for a, ts in enumerate(times_per_node):
        dt = np.diff(ts)
        prod = np.sum(np.diff(nu[a], axis=0) * np.diff(phi[a], axis=0), axis=1) / dt
        s += weights[a] * float(np.sum(np.abs(prod)))
    return 0.5 * eta * T * s


@dataclass
class DissipationCase:
    """Random piecewise-affine nodal paths on a random time set."""

    times_per_node: list
    nu: list
    phi: list
    weights: np.ndarray
    T: float

    def gap(self, eta: float = 1.0) -> float:
        cont, disc = dissipation_pair(self.times_per_node, self.nu, self.phi, self.weights, eta)
        return abs(cont - disc)

    def bound(self, eta: float = 1.0) -> float:
        return dissipation_bound(self.times_per_node, self.nu, self.phi, self.weights, eta, self.T)

    def bound_abs(self, eta: float = 1.0) -> float:
        return dissipation_bound_abs(self.times_per_node, self.nu, self.phi, self.weights, eta,
                                     self.T)


def random_dissipation_case(mesh, seed: int, kind: str = "gauss", k: int = 2,
                            max_ratio: float = 3.0) -> DissipationCase:
    """Nodal values i.i.d. normal (``gauss``) or sampled from random sinusoids (``smooth``)."""
    from .mesh import lumped_coefficients
    from .timesets import Jittered, build

    rng = np.random.default_rng(seed)
    theta = build(mesh, 0.0, 1.0, Jittered(int(rng.integers(3, 20)), seed, max_ratio))
    tpn = [theta.nodal_times(a).times for a in range(mesh.n_nodes)]
    if kind == "gauss":
        nu = [rng.standard_normal((len(t), k)) for t in tpn]
        phi = [rng.standard_normal((len(t), k)) for t in tpn]
    elif kind == "smooth":
        c = rng.standard_normal((2, k))
        f = rng.uniform(1, 4, (2, k))
        nu = [np.sin(f[0] * t[:, None] + c[0]) for t in tpn]
        phi = [np.cos(f[1] * t[:, None] + c[1]) for t in tpn]
    else:
        raise ValueError(f"unknown kind {kind!r}")
    w = lumped_coefficients(mesh, 1.0).weights
    return DissipationCase(tpn, nu, phi, w, theta.metrics.T)


# -- convergence ---------------------------------------------------------------------


@dataclass
class Problem:
    """Mesh + material + initial data + interval."""

    model: Model
    init: State
    t0: float = 0.0
    tf: float = 1.0


@dataclass
class LevelResult:
    level: int
    T: float
    tau: float
    sup_err: float
    l2_rate_err: float
    pV_u: float
    pV_nu: float
    max_rate: float
    runtime: float


@dataclass
class ConvergenceReport:
    mode: str
    levels: list[LevelResult] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([lv.sup_err for lv in self.levels])

    @property
    def rate_errors(self) -> np.ndarray:
        return np.array([lv.l2_rate_err for lv in self.levels])

    def orders(self) -> np.ndarray:
        e = self.errors
        e = e[np.isfinite(e) & (e > 0)]
        return np.log2(e[:-1] / e[1:])

    @property
    def order(self) -> float:
        o = self.orders()
        return float(np.mean(o)) if o.size else math.nan

    @property
    def monotone(self) -> bool:
        e = self.errors[np.isfinite(self.errors)]
        return bool(np.all(np.diff(e) < 0))

    def to_csv(self) -> str:
        out = ["level,T_theta,tau_theta,sup_err,l2_rate_err,pV_u,pV_nu,max_rate"]
        for lv in self.levels:
            out.append(",".join([str(lv.level)] + [repr(float(v)) for v in (
                lv.T, lv.tau, lv.sup_err, lv.l2_rate_err, lv.pV_u, lv.pV_nu, lv.max_rate)]))
        out.append(f"# mode={self.mode}")
        out.append("# runtime_s=" + ",".join(f"{lv.runtime:.4f}" for lv in self.levels))
        out.append(f"# order={self.order:.4f}")
        if not self.monotone:
            out.append("# warning: discrepancies are not monotonically decreasing")
        return "\n".join(out) + "\n"


def _oracle_errors(traj: Trajectory, sys: oracle.LinearSystem, init: State):
    model = traj.model
    grid = traj.timeset.global_times
    U, N = traj.values_at(grid)
    X = np.array([model.pack(U[i], N[i]) for i in range(len(grid))])
    Xr, _ = oracle.exact_solution(sys, init, grid)
    sup = float(np.max(np.abs(X - Xr)))
    mids = 0.5 * (grid[1:] + grid[:-1])
    UD, ND = traj.rates_at(mids)
    Vd = np.array([model.pack(UD[i], ND[i]) for i in range(len(mids))])
    _, Vr = oracle.exact_solution(sys, init, mids)
    l2 = math.sqrt(float(np.sum(np.diff(grid)[:, None] * (Vd - Vr) ** 2)))
    return sup, l2


def _cauchy_errors(traj: Trajectory, ref: Trajectory):
    model = traj.model
    grid = np.union1d(traj.timeset.global_times, ref.timeset.global_times)
    U1, N1 = traj.values_at(grid)
    U2, N2 = ref.values_at(grid)
    sup = float(max(np.max(np.abs(U1 - U2)), np.max(np.abs(N1 - N2))))
    left = grid[:-1]
    A1, B1 = traj.rates_at(left)
    A2, B2 = ref.rates_at(left)
    dt = np.diff(grid)
    sq = np.sum((A1 - A2) ** 2, axis=(1, 2)) + np.sum((B1 - B2) ** 2, axis=(1, 2))
    return sup, math.sqrt(float(np.sum(dt * sq)))


def convergence_study(problem: Problem, integrator: Callable[[Problem, int], Trajectory],
                      levels: int, mode: str = "oracle", workers: int = 1) -> ConvergenceReport:
    """Run ``integrator(problem, level)`` for each level and compare.

    ``mode='oracle'`` measures against the exact linear solution, ``'cauchy'``
    against the finest level (whose own row then reports zero error).
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if mode not in ("oracle", "cauchy"):
        raise ValueError(f"unknown mode {mode!r}")

    def one(level):
        start = _time.perf_counter()
        try:
            traj = integrator(problem, level)
        except Exception as exc:
            raise RuntimeError(f"level {level}: {exc}") from exc
        return traj, _time.perf_counter() - start

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(levels)))
    else:
        results = [one(lv) for lv in range(levels)]

    report = ConvergenceReport(mode)
    sys = oracle.assemble(model=problem.model) if mode == "oracle" else None
    finest = results[-1][0]
    for level, (traj, rt) in enumerate(results):
        if mode == "oracle":
            sup, l2 = _oracle_errors(traj, sys, problem.init)
        else:
            sup, l2 = _cauchy_errors(traj, finest)
        m = traj.timeset.metrics
        report.levels.append(LevelResult(
            level, m.T, m.tau, sup, l2, pointwise_variation(traj, "u"),
            pointwise_variation(traj, "nu"), traj.max_rate(), rt))
    if mode == "cauchy":
        # the finest level is the reference, not a measurement
        report.levels[-1].sup_err = math.nan
        report.levels[-1].l2_rate_err = math.nan
    return report


def sync_levels(n0: int, quadrature: str = "vertex"):
    """Integrator factory: synchronous uniform sets with n0 * 2^level steps."""
    from .timesets import Uniform, build

    def integ(problem: Problem, level: int) -> Trajectory:
        theta = build(problem.model.mesh, problem.t0, problem.tf, Uniform(n0 * 2 ** level),
                      mode="relaxed")
        return integrate_sync.run(model=problem.model, timeset=theta, init=problem.init,
                                  quadrature=quadrature)

    return integ


def avi_levels(n0: int, seed: int = 0, max_ratio: float = 2.0, jittered: bool = True):
    """Integrator factory: AVI on jittered strict sets (or uniform relaxed) with n0 * 2^level steps."""
    from .timesets import Jittered, Uniform, build

    def integ(problem: Problem, level: int) -> Trajectory:
        n = n0 * 2 ** level
        if jittered:
            theta = build(problem.model.mesh, problem.t0, problem.tf,
                          Jittered(n, seed + level, max_ratio), mode="strict")
        else:
            theta = build(problem.model.mesh, problem.t0, problem.tf, Uniform(n), mode="relaxed")
        return integrate_avi.run(model=problem.model, timeset=theta, init=problem.init)

    return integ
