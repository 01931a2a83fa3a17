"""Piecewise-affine nodal trajectories produced by the integrators."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class JumpEvent:
    """Velocity jumps applied at one event time (one or several coincident elements)."""

    t: float
    elements: tuple[int, ...]
    nodes: np.ndarray
    du: np.ndarray  # (len(nodes), d)
    dnu: np.ndarray  # (len(nodes), k)


@dataclass(eq=False)
class NodeHistory:
    """Instants t_a^i with values and right-limit rates.

    The rate stored at the final instant t_f repeats the last interval's
    rate (there is no interval to its right).
    """

    times: np.ndarray
    u: np.ndarray
    nu: np.ndarray
    u_dot: np.ndarray
    nu_dot: np.ndarray


@dataclass(eq=False)
class Trajectory:
    model: object
    timeset: object
    nodes: list[NodeHistory]
    integrator: str
    quadrature: str = "vertex"
    events: int = 0
    info: dict = field(default_factory=dict)

    @property
    def t0(self) -> float:
        return self.timeset.t0

    @property
    def tf(self) -> float:
        return self.timeset.tf

    @property
    def n(self) -> int:
        return len(self.nodes)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12) or np.any(t > self.tf + 1e-12):
            raise ValueError(f"time outside [{self.t0}, {self.tf}]")
        return t

    def values_at(self, times):
        """Affinely interpolated (u, nu) at each time: arrays (T, n, d) and (T, n, k)."""
        times = np.atleast_1d(self._check_time(times))
        d = self.nodes[0].u.shape[1]
        k = self.nodes[0].nu.shape[1]
        U = np.empty((len(times), self.n, d))
        N = np.empty((len(times), self.n, k))
        for a, h in enumerate(self.nodes):
            i = np.clip(np.searchsorted(h.times, times, side="right") - 1, 0, len(h.times) - 1)
            dt = (times - h.times[i])[:, None]
            U[:, a] = h.u[i] + dt * h.u_dot[i]
            N[:, a] = h.nu[i] + dt * h.nu_dot[i]
        return U, N

    def rates_at(self, times):
        """Right-limit rates (left limit at t_f): arrays (T, n, d) and (T, n, k)."""
        times = np.atleast_1d(self._check_time(times))
        d = self.nodes[0].u.shape[1]
        k = self.nodes[0].nu.shape[1]
        U = np.empty((len(times), self.n, d))
        N = np.empty((len(times), self.n, k))
        for a, h in enumerate(self.nodes):
            i = np.clip(np.searchsorted(h.times, times, side="right") - 1, 0, len(h.times) - 1)
            U[:, a] = h.u_dot[i]
            N[:, a] = h.nu_dot[i]
        return U, N

    def max_rate(self) -> float:
        return float(max(
            np.max(np.linalg.norm(h.u_dot, axis=1) + np.linalg.norm(h.nu_dot, axis=1))
            for h in self.nodes
        ))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "channel", "value", "rate"])
        for a, h in enumerate(self.nodes):
            for i, t in enumerate(h.times):
                for j in range(h.u.shape[1]):
                    w.writerow([repr(float(t)), a, f"u{j}", repr(float(h.u[i, j])),
                                repr(float(h.u_dot[i, j]))])
                for j in range(h.nu.shape[1]):
                    w.writerow([repr(float(t)), a, f"nu{j}", repr(float(h.nu[i, j])),
                                repr(float(h.nu_dot[i, j]))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def read_csv(text: str) -> dict:
    """Parse a trajectory CSV into {(node, channel): (times, values, rates)}."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out: dict = {}
    for r in rows:
        out.setdefault((int(r["node"]), r["channel"]), []).append(
            (float(r["t"]), float(r["value"]), float(r["rate"])))
    return {key: tuple(np.array(c) for c in zip(*v)) for key, v in out.items()}
