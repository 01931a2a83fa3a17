"""Elemental, global and nodal time sets and their size/asynchronicity metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class TimeSetError(ValueError):
    pass


@dataclass(frozen=True)
class Uniform:
    n: int


@dataclass(frozen=True)
class PerElementUniform:
    n: tuple[int, ...]


@dataclass(frozen=True)
class Jittered:
    """Per-element random steps rescaled to fill the interval.

    Steps are 1 + (r - 1) u with u uniform in [0, 1). Each element is
    rescaled separately, which can push the ratio across elements above r,
    so r is shrunk (by bisection, same draws) until tau <= max_ratio.
    """

    n: int
    seed: int = 0
    max_ratio: float = 2.0


@dataclass(frozen=True)
class Metrics:
    h: float  # largest gap of the global set
    T: float  # largest elemental gap
    tau: float  # largest / smallest elemental gap
    tau_prime: float  # largest / smallest gap of the global set


@dataclass(frozen=True)
class NodalTimes:
    times: np.ndarray
    owners: tuple[tuple[int, ...], ...]  # elements holding each instant, increasing index

    @property
    def owner(self) -> tuple[int, ...]:
        """Tie-broken owner (smallest element index) per instant."""
        return tuple(o[0] if o else -1 for o in self.owners)

    def successor(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right"))
        if i >= len(self.times) or i == 0 or self.times[i - 1] != t:
            raise KeyError(f"{t!r} is not an interior nodal instant")
        return float(self.times[i])


@dataclass(frozen=True, eq=False)
class TimeSet:
    t0: float
    tf: float
    element_times: tuple[np.ndarray, ...]
    mode: str = "strict"
    node_elements: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))
        if not self.t0 < self.tf:
            raise TimeSetError(f"need t0 < tf, got ({self.t0}, {self.tf})")
        if self.mode not in ("strict", "relaxed"):
            raise TimeSetError(f"mode must be strict or relaxed, got {self.mode!r}")
        ets = tuple(np.asarray(t, dtype=float) for t in self.element_times)
        object.__setattr__(self, "element_times", ets)
        for K, t in enumerate(ets):
            if len(t) < 2 or t[0] != self.t0 or t[-1] != self.tf:
                raise TimeSetError(f"element {K}: time set must start at t0 and end at tf")
            if np.any(np.diff(t) <= 0):
                raise TimeSetError(f"element {K}: time set must be strictly increasing")
        if self.mode == "strict" and not self.disjoint:
            raise TimeSetError("strict mode needs pairwise-disjoint interior instants")

    @cached_property
    def disjoint(self) -> bool:
        interior = np.concatenate([t[1:-1] for t in self.element_times])
        return len(np.unique(interior)) == len(interior)

    @cached_property
    def global_times(self) -> np.ndarray:
        return np.unique(np.concatenate(self.element_times))

    @cached_property
    def metrics(self) -> Metrics:
        return metrics(self)

    @property
    def synchronous(self) -> bool:
        first = self.element_times[0]
        return all(len(t) == len(first) and np.array_equal(t, first) for t in self.element_times)

    def nodal_times(self, a: int) -> NodalTimes:
        return self._nodal[a]

    @cached_property
    def _nodal(self) -> tuple[NodalTimes, ...]:
        out = []
        for elems in self.node_elements:
            owners: dict[float, list[int]] = {}
            for K in elems:
                for t in self.element_times[K]:
                    owners.setdefault(float(t), []).append(K)
            times = np.array(sorted(owners))
            own = []
            for t in times:
                o = tuple(sorted(owners[float(t)])) if self.t0 < t < self.tf else ()
                own.append(o)
            out.append(NodalTimes(times, tuple(own)))
        return tuple(out)

    def refined(self) -> "TimeSet":
        """Every elemental gap halved (midpoints inserted)."""
        ets = []
        for t in self.element_times:
            r = np.empty(2 * len(t) - 1)
            r[::2] = t
            r[1::2] = 0.5 * (t[1:] + t[:-1])
            ets.append(r)
        return TimeSet(self.t0, self.tf, tuple(ets), self.mode, self.node_elements)


def metrics(theta: TimeSet) -> Metrics:
    gaps = [np.diff(t) for t in theta.element_times]
    gmax = max(float(g.max()) for g in gaps)
    gmin = min(float(g.min()) for g in gaps)
    glob = np.diff(theta.global_times)
    return Metrics(float(glob.max()), gmax, gmax / gmin, float(glob.max() / glob.min()))


def from_element_times(mesh, t0: float, tf: float, element_times, mode: str = "strict") -> TimeSet:
    if len(element_times) != mesh.n_elements:
        raise TimeSetError(f"need {mesh.n_elements} elemental sets, got {len(element_times)}")
    return TimeSet(t0, tf, tuple(element_times), mode, mesh.node_elements)


def _jittered_sets(draws, t0, tf, max_ratio):
    def make(r):
        steps = 1.0 + (r - 1.0) * draws
        steps *= (tf - t0) / steps.sum(axis=1, keepdims=True)
        return steps

    def tau(steps):
        return steps.max() / steps.min()

    r = max_ratio
    if tau(make(r)) > max_ratio:
        lo, hi = 1.0, max_ratio
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if tau(make(mid)) <= max_ratio else (lo, mid)
        r = lo
    sets = []
    for steps in make(r):
        t = t0 + np.concatenate([[0.0], np.cumsum(steps)])
        t[-1] = tf
        sets.append(t)
    return sets


def build(mesh, t0: float, tf: float, policy, mode: str = "strict") -> TimeSet:
    """Generate elemental time sets from a policy.

    When strict mode cannot be honoured (coinciding interior instants) a
    warning is issued and the relaxed set is returned.
    """
    m = mesh.n_elements
    if isinstance(policy, Uniform):
        if policy.n < 1:
            raise TimeSetError("n must be >= 1")
        sets = [np.linspace(t0, tf, policy.n + 1)] * m
    elif isinstance(policy, PerElementUniform):
        if len(policy.n) != m:
            raise TimeSetError(f"need {m} per-element step counts, got {len(policy.n)}")
        if min(policy.n) < 1:
            raise TimeSetError("n must be >= 1")
        sets = [np.linspace(t0, tf, n + 1) for n in policy.n]
    elif isinstance(policy, Jittered):
        if policy.n < 1:
            raise TimeSetError("n must be >= 1")
        if policy.max_ratio < 1:
            raise TimeSetError("max_ratio must be >= 1")
        rng = np.random.default_rng(policy.seed)
        draws = rng.uniform(0.0, 1.0, size=(m, policy.n))
        sets = _jittered_sets(draws, t0, tf, policy.max_ratio)
    else:
        raise TimeSetError(f"unknown policy {policy!r}")

    if mode == "strict":
        interior = np.concatenate([s[1:-1] for s in sets])
        if len(np.unique(interior)) != len(interior):
            warnings.warn("elemental time sets share interior instants; using relaxed mode",
                          stacklevel=2)
            mode = "relaxed"
    return TimeSet(t0, tf, tuple(sets), mode, mesh.node_elements)


def policy_from_config(name: str, n: int, seed: int = 0, max_ratio: float = 2.0,
                       per_element: tuple[int, ...] | None = None):
    if name == "uniform":
        return Uniform(n)
    if name == "per_element_uniform":
        return PerElementUniform(tuple(per_element or ()))
    if name == "jittered":
        return Jittered(n, seed, max_ratio)
    raise TimeSetError(f"unknown time set policy {name!r}")
