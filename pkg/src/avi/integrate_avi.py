"""Asynchronous variational integrator for the quadratic co-energy 1/2 rho_bar |nu_dot|^2.

Each element K kicks its vertices at the interior instants of its own time
set. At an instant t = t_K^j the kick on vertex a is

    u_dot_a  <-  u_dot_a - dt_K f_u / m_a
    nu_dot_a <-  (rho_a nu_dot_a - dt_K f_nu) / (rho_a + eta_a (t_a^{i+1} - t_a^i))

with dt_K = t_K^{j+1} - t_K^j and (f_u, f_nu) the element forces evaluated
at the affinely advanced positions. Elements sharing an instant (relaxed
mode) are processed together so each nodal instant gets one update.
"""

from __future__ import annotations

import heapq
import logging
import math
import warnings
from typing import Callable, Iterator

import numpy as np

from .assembly import Model, State
from .material import ScalarChi
from .timesets import TimeSet
from .trajectory import JumpEvent, NodeHistory, Trajectory

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Numerical failure during a run (non-finite state, failed solve, ...)."""


class EventQueue:
    """Min-queue of (time, element, index); ties resolved by element index."""

    def __init__(self, timeset: TimeSet):
        self._theta = timeset.element_times
        self._heap = [(float(t[1]), K, 1) for K, t in enumerate(self._theta) if len(t) > 2]
        heapq.heapify(self._heap)
        self.popped = 0

    def __bool__(self):
        return bool(self._heap)

    def pop_group(self) -> tuple[float, list[tuple[int, int]]]:
        """Pop every entry sharing the smallest time; re-enqueue their successors."""
        t, K, j = heapq.heappop(self._heap)
        group = [(K, j)]
        while self._heap and self._heap[0][0] == t:
            _, K2, j2 = heapq.heappop(self._heap)
            group.append((K2, j2))
        for K, j in group:
            if j + 2 < len(self._theta[K]):
                heapq.heappush(self._heap, (float(self._theta[K][j + 1]), K, j + 1))
        self.popped += len(group)
        return t, group


def stability_ceiling(model: Model) -> float:
    """CFL-style heuristic 0.5 * sqrt(min nodal mass / |stiffness|_2)."""
    kn = float(np.linalg.norm(model.stiffness, 2))
    mmin = float(min(model.coeffs.mass.min(), model.coeffs.inertia.min()))
    return math.inf if kn == 0 else 0.5 * math.sqrt(mmin / kn)


def _as_model(mesh, material, model):
    if model is not None:
        return model
    return Model(mesh, material)


def iter_events(model: Model, timeset: TimeSet, init: State, *,
                max_T: float | None = None, _record=None) -> Iterator[JumpEvent]:
    """Drive the integrator, yielding the velocity jumps of every event group in order."""
    if not isinstance(model.material.chi, ScalarChi):
        raise ValueError("the asynchronous integrator requires chi = 1/2 rho_bar |nu_dot|^2 "
                         f"(got {model.material.chi!r})")
    if len(timeset.element_times) != model.mesh.n_elements:
        raise ValueError("time set and mesh disagree on the number of elements")
    model.check_constraints(init)
    ceiling = stability_ceiling(model) if max_T is None else max_T
    if timeset.metrics.T > ceiling:
        warnings.warn(f"T_theta={timeset.metrics.T:.3g} exceeds the stability ceiling "
                      f"{ceiling:.3g}; the explicit update may be unstable", stacklevel=2)

    els = model.mesh.elements
    m = model.coeffs.mass
    rb = model.coeffs.inertia
    eta = model.coeffs.damping
    free_u, free_nu = model.free_u, model.free_nu
    t0 = timeset.t0

    u = init.u.copy()
    nu = init.nu.copy()
    ud = init.u_dot.copy()
    nud = init.nu_dot.copy()
    last = np.full(model.n, float(t0))
    nodal = [timeset.nodal_times(a).times for a in range(model.n)]
    ptr = np.zeros(model.n, dtype=np.int64)

    queue = EventQueue(timeset)
    while queue:
        t, group = queue.pop_group()
        elements = sorted(K for K, _ in group)
        nodes = np.unique(els[elements].ravel())
        dt = (t - last[nodes])[:, None]
        u[nodes] += dt * ud[nodes]
        nu[nodes] += dt * nud[nodes]
        last[nodes] = t

        imp_u = np.zeros((model.n, model.d))
        imp_nu = np.zeros((model.n, model.k))
        for K, j in sorted(group):
            theta = timeset.element_times[K]
            h = theta[j + 1] - theta[j]
            vk = els[K]
            fu, fnu = model.element_force(K, u[vk], nu[vk])
            imp_u[vk] += h * fu
            imp_nu[vk] += h * fnu

        succ = np.empty(len(nodes))
        for s, a in enumerate(nodes):
            p = ptr[a] + 1
            if nodal[a][p] != t:
                raise IntegrationError(f"node {a}: event at t={t!r} is not its next nodal instant")
            ptr[a] = p
            succ[s] = nodal[a][p + 1]

        old_ud = ud[nodes].copy()
        old_nud = nud[nodes].copy()
        new_ud = old_ud - imp_u[nodes] / m[nodes, None]
        hn = (succ - t)[:, None]
        new_nud = (rb[nodes, None] * old_nud - imp_nu[nodes]) / (rb[nodes, None] + eta[nodes, None] * hn)
        ud[nodes] = np.where(free_u[nodes], new_ud, old_ud)
        nud[nodes] = np.where(free_nu[nodes], new_nud, old_nud)

        if not (np.all(np.isfinite(ud[nodes])) and np.all(np.isfinite(nud[nodes]))
                and np.all(np.isfinite(u[nodes])) and np.all(np.isfinite(nu[nodes]))):
            raise IntegrationError(f"non-finite state at t={t!r} after kicks of elements {elements}")
        if _record is not None:
            _record(t, nodes, u, nu, ud, nud)
        yield JumpEvent(t, tuple(elements), nodes, ud[nodes] - old_ud, nud[nodes] - old_nud)

    if queue.popped != sum(max(len(t) - 2, 0) for t in timeset.element_times):
        raise IntegrationError("event queue exhausted before t_f")
    if _record is not None:
        tf = timeset.tf
        allnodes = np.arange(model.n)
        dt = (tf - last)[:, None]
        _record(tf, allnodes, u + dt * ud, nu + dt * nud, ud, nud)


def run(mesh=None, material=None, timeset: TimeSet | None = None, init: State | None = None, *,
        model: Model | None = None, max_T: float | None = None,
        hooks: list[Callable[[JumpEvent], None]] | None = None) -> Trajectory:
    """Integrate from ``init`` over ``timeset`` and return the full nodal history."""
    model = _as_model(mesh, material, model)
    if init is None:
        init = State.zeros(model.n, model.d, model.k, timeset.t0)
    hist = {a: ([timeset.t0], [init.u[a].copy()], [init.nu[a].copy()], [init.u_dot[a].copy()],
                [init.nu_dot[a].copy()]) for a in range(model.n)}

    def record(t, nodes, u, nu, ud, nud):
        for a in nodes:
            ts, us, ns, uds, nds = hist[int(a)]
            ts.append(t)
            us.append(u[a].copy())
            ns.append(nu[a].copy())
            uds.append(ud[a].copy())
            nds.append(nud[a].copy())

    n_events = 0
    for ev in iter_events(model, timeset, init, max_T=max_T, _record=record):
        n_events += len(ev.elements)
        for hk in hooks or ():
            hk(ev)

    nodes = []
    for a in range(model.n):
        ts, us, ns, uds, nds = hist[a]
        uds[-1] = uds[-2]
        nds[-1] = nds[-2]
        nodes.append(NodeHistory(np.array(ts), np.array(us), np.array(ns), np.array(uds),
                                 np.array(nds)))
    log.debug("avi run finished: %d element events", n_events)
    return Trajectory(model, timeset, nodes, "avi", "vertex", n_events)


def diagnostics_hooks(model: Model, timeset: TimeSet, init: State, **kw) -> Iterator[JumpEvent]:
    """Stream of (time, elements, per-node velocity jumps), one item per event group."""
    return iter_events(model, timeset, init, **kw)
