"""Simplicial meshes, P1 shape functions and lumped nodal coefficients."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np


class MeshError(ValueError):
    """Raised for malformed mesh files or violated mesh invariants."""


class Marker(enum.Enum):
    TRACTION = "traction"
    FIXED_U = "fixed_u"
    FIXED_NU = "fixed_nu"
    FREE = "free"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh in 2 or 3 dimensions.

    ``k`` is the descriptor dimension carried by the mesh file header; it is
    not used geometrically but travels with the mesh so a run is fully
    described by (mesh, material).
    """

    dim: int
    k: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary: tuple[tuple[tuple[int, ...], Marker], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=np.int64))
        object.__setattr__(
            self,
            "boundary",
            tuple((tuple(int(i) for i in f), Marker(m)) for f, m in self.boundary),
        )
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self):
        d = self.dim
        if d not in (2, 3):
            raise MeshError(f"dimension must be 2 or 3, got {d}")
        if self.k < 1:
            raise MeshError(f"descriptor dimension k must be >= 1, got {self.k}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != d:
            raise MeshError(f"nodes must have shape (n, {d})")
        if self.elements.ndim != 2 or self.elements.shape[1] != d + 1:
            raise MeshError(f"elements must have shape (m, {d + 1})")
        n = len(self.nodes)
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            bad = int(self.elements[(self.elements < 0) | (self.elements >= n)][0])
            raise MeshError(f"element references missing node index {bad} (mesh has {n} nodes)")
        for K, el in enumerate(self.elements):
            if len(set(el.tolist())) != d + 1:
                raise MeshError(f"element {K} repeats a node")
        used = np.zeros(n, dtype=bool)
        used[self.elements.ravel()] = True
        if not used.all():
            raise MeshError(f"node {int(np.flatnonzero(~used)[0])} belongs to no element")
        vol = self.signed_volumes
        if np.any(vol <= 0.0):
            K = int(np.flatnonzero(vol <= 0.0)[0])
            raise MeshError(f"element {K} has nonpositive signed volume {vol[K]:.3e}")

        seen: dict[frozenset, Marker] = {}
        for facet, marker in self.boundary:
            if len(facet) != d:
                raise MeshError(f"boundary facet {facet} must list {d} nodes")
            if min(facet) < 0 or max(facet) >= n:
                raise MeshError(f"boundary facet {facet} references a missing node")
            key = frozenset(facet)
            if len(key) != d:
                raise MeshError(f"boundary facet {facet} repeats a node")
            owners = self._facet_owners.get(key, [])
            if len(owners) != 1:
                raise MeshError(
                    f"boundary facet {facet} belongs to {len(owners)} elements (expected exactly 1)"
                )
            prev = seen.get(key)
            if prev is not None:
                if {prev, marker} == {Marker.TRACTION, Marker.FIXED_U}:
                    raise MeshError(f"facet {facet} is marked both traction and fixed_u")
                if prev == marker:
                    raise MeshError(f"facet {facet} listed twice with marker {marker.value}")
            seen[key] = marker

    @cached_property
    def _facet_owners(self) -> dict[frozenset, list[int]]:
        owners: dict[frozenset, list[int]] = {}
        for K, el in enumerate(self.elements):
            for f in combinations(el.tolist(), self.dim):
                owners.setdefault(frozenset(f), []).append(K)
        return owners

    # -- geometry ---------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        x = self.nodes[self.elements]  # (m, d+1, d)
        J = x[:, 1:, :] - x[:, :1, :]
        return np.linalg.det(J) / math.factorial(self.dim)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant shape-function gradients, shape (m, d+1, d).

        Row ``a`` of ``gradients[K]`` is the gradient of the barycentric
        coordinate of the ``a``-th local vertex of element ``K``.
        """
        x = self.nodes[self.elements]
        J = x[:, 1:, :] - x[:, :1, :]  # rows are edge vectors
        Jinv = np.linalg.inv(J)  # columns give grad lambda_1..d
        g = np.empty((self.n_elements, self.dim + 1, self.dim))
        g[:, 1:, :] = np.transpose(Jinv, (0, 2, 1))
        g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
        return g

    def local_index(self, K: int, a: int) -> int:
        hits = np.flatnonzero(self.elements[K] == a)
        if hits.size == 0:
            raise MeshError(f"node {a} is not a vertex of element {K}")
        return int(hits[0])

    def shape_values(self, K: int, points) -> np.ndarray:
        """Barycentric coordinates of ``points`` (p, d) w.r.t. element K, shape (p, d+1)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0 = self.nodes[self.elements[K, 0]]
        lam = (pts - x0) @ self.gradients[K, 1:, :].T
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    @cached_property
    def node_elements(self) -> tuple[tuple[int, ...], ...]:
        """Elements incident to each node, in increasing element index."""
        inc: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for K, el in enumerate(self.elements):
            for a in el:
                inc[int(a)].append(K)
        return tuple(tuple(v) for v in inc)

    # -- boundary ---------------------------------------------------------

    def facets_with(self, marker: Marker) -> list[tuple[int, ...]]:
        return [f for f, m in self.boundary if m is marker]

    def facet_element(self, facet) -> int:
        return self._facet_owners[frozenset(facet)][0]

    def facet_measure(self, facet) -> float:
        p = self.nodes[list(facet)]
        if self.dim == 2:
            return float(np.linalg.norm(p[1] - p[0]))
        return float(0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])))

    @cached_property
    def fixed_u_nodes(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        for f in self.facets_with(Marker.FIXED_U):
            mask[list(f)] = True
        return mask

    @cached_property
    def fixed_nu_nodes(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        for f in self.facets_with(Marker.FIXED_NU):
            mask[list(f)] = True
        return mask

    def scaled(self, s: float) -> "Mesh":
        return Mesh(self.dim, self.k, self.nodes * s, self.elements, self.boundary)


def shape_gradient(mesh: Mesh, K: int, a: int) -> np.ndarray:
    """Gradient of the nodal shape function of global node ``a`` on element ``K``."""
    return mesh.gradients[K, mesh.local_index(K, a)].copy()


@dataclass(frozen=True, eq=False)
class NodalCoefficients:
    """Vertex-lumped mass, substructural inertia and dissipation coefficients.

    ``weights`` are the lumped volumes w_a = sum_K |K|/(d+1); every other
    nodal coefficient is its density times ``weights``.
    """

    weights: np.ndarray
    element_weights: np.ndarray  # (m,) value |K|/(d+1) shared by the vertices of K
    rho: float
    rho_bar: float
    eta: float
    mass: np.ndarray = field(init=False)
    inertia: np.ndarray = field(init=False)
    damping: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mass", self.rho * self.weights)
        object.__setattr__(self, "inertia", self.rho_bar * self.weights)
        object.__setattr__(self, "damping", self.eta * self.weights)

    @property
    def element_mass(self) -> np.ndarray:
        return self.rho * self.element_weights

    @property
    def element_inertia(self) -> np.ndarray:
        return self.rho_bar * self.element_weights

    @property
    def element_damping(self) -> np.ndarray:
        return self.eta * self.element_weights


def lumped_weights(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    ew = mesh.volumes / (mesh.dim + 1)
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.elements, ew[:, None])
    return w, ew


def lumped_coefficients(mesh: Mesh, rho: float, rho_bar: float = 1.0, eta: float = 0.0) -> NodalCoefficients:
    """Row-sum lumping on simplices: every vertex of K receives |K|/(d+1) of each density."""
    if rho <= 0 or rho_bar <= 0:
        raise ValueError(f"densities must be positive (rho={rho}, rho_bar={rho_bar})")
    if eta < 0:
        raise ValueError(f"dissipation coefficient must be nonnegative, got {eta}")
    w, ew = lumped_weights(mesh)
    return NodalCoefficients(w, ew, float(rho), float(rho_bar), float(eta))


def grad_bound_constant(mesh: Mesh) -> float:
    # sup|grad u| <= c |u| with c the largest spectral norm of the stacked element gradients
    return float(max(np.linalg.norm(G, 2) for G in mesh.gradients))


# -- file format ---------------------------------------------------------------


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_mesh(text: str) -> Mesh:
    """Parse the line-oriented mesh format (``dim``/``nodes``/``elements``/``boundary``)."""
    lines = list(_tokens(text))
    pos = 0

    def take(expected_kw: str, nargs: int):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"unexpected end of file, expected '{expected_kw}'")
        lineno, tok = lines[pos]
        if tok[0] != expected_kw or len(tok) != nargs + 1:
            raise MeshError(f"line {lineno}: expected '{expected_kw}' with {nargs} argument(s)")
        pos += 1
        try:
            return lineno, [int(t) for t in tok[1:]]
        except ValueError:
            raise MeshError(f"line {lineno}: non-integer argument to '{expected_kw}'") from None

    _, (d, k) = take("dim", 2)
    if d not in (2, 3):
        raise MeshError(f"line {lines[0][0]}: dimension must be 2 or 3")

    def block(n: int, width: int, conv, extra: int = 0):
        nonlocal pos
        rows = []
        for _ in range(n):
            if pos >= len(lines):
                raise MeshError("unexpected end of file inside a block")
            lineno, tok = lines[pos]
            if len(tok) != width + extra:
                raise MeshError(f"line {lineno}: expected {width + extra} fields, got {len(tok)}")
            try:
                rows.append(([conv(t) for t in tok[:width]], tok[width:]))
            except ValueError:
                raise MeshError(f"line {lineno}: cannot parse {tok!r}") from None
            pos += 1
        return rows

    _, (n,) = take("nodes", 1)
    nodes = [r for r, _ in block(n, d, float)]
    _, (m,) = take("elements", 1)
    elements = [r for r, _ in block(m, d + 1, int)]
    boundary = []
    if pos < len(lines):
        _, (b,) = take("boundary", 1)
        start = pos
        for i, (facet, rest) in enumerate(block(b, d, int, extra=1)):
            token = rest[0].lower()
            try:
                boundary.append((tuple(facet), Marker(token)))
            except ValueError:
                raise MeshError(f"line {lines[start + i][0]}: unknown marker '{rest[0]}'") from None
    if pos < len(lines):
        raise MeshError(f"line {lines[pos][0]}: trailing content")
    return Mesh(d, k, np.array(nodes, dtype=float).reshape(n, d),
                np.array(elements, dtype=np.int64).reshape(m, d + 1), tuple(boundary))


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        return load_mesh(fh.read())


def dump_mesh(mesh: Mesh) -> str:
    out = [f"dim {mesh.dim} {mesh.k}", f"nodes {mesh.n_nodes}"]
    out += [" ".join(repr(float(c)) for c in x) for x in mesh.nodes]
    out.append(f"elements {mesh.n_elements}")
    out += [" ".join(str(int(i)) for i in el) for el in mesh.elements]
    if mesh.boundary:
        out.append(f"boundary {len(mesh.boundary)}")
        out += [" ".join(str(i) for i in f) + f" {m.value}" for f, m in mesh.boundary]
    return "\n".join(out) + "\n"


def square_mesh(n: int = 1, k: int = 1, markers: dict[str, str] | None = None) -> Mesh:
    """Structured n x n unit-square triangulation (2 triangles per cell).

    ``markers`` maps side names ``left/right/bottom/top`` to marker tokens;
    unlisted sides get no boundary entry. Intended for tests and demos.
    """
    markers = markers or {}
    xs = np.linspace(0.0, 1.0, n + 1)
    nodes = np.array([(x, y) for y in xs for x in xs])
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    elements = []
    for j in range(n):
        for i in range(n):
            a, b, c, e = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            elements += [(a, b, c), (a, c, e)]
    sides = {
        "bottom": [(idx(i, 0), idx(i + 1, 0)) for i in range(n)],
        "right": [(idx(n, j), idx(n, j + 1)) for j in range(n)],
        "top": [(idx(i + 1, n), idx(i, n)) for i in range(n)],
        "left": [(idx(0, j + 1), idx(0, j)) for j in range(n)],
    }
    boundary = [(f, Marker(tok)) for side, tok in markers.items() for f in sides[side]]
    return Mesh(2, k, nodes, np.array(elements), tuple(boundary))
