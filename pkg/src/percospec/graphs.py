"""Finite patches of periodic and aperiodic planar graphs with exact coordinates.

Vertices are stored as integer coefficient vectors in a fixed per-family basis
(Z^2 for the square and triangular lattices, a rank-4 integer module for the
pentagrid rhombus tiling and the octagonal cut-and-project tiling).  The float
embedding into the plane is always a derived view; every structural operation
(translation, pattern matching, deduplication) happens on the integer
coefficients, so two vertices are equal iff their coefficient vectors are
equal.  This keeps long pipelines free of float-comparison drift.

A patch is the restriction of the infinite graph to a region (an open ball by
default).  Generation is deterministic: the same generator spec produces the
same vertex order, edge order, and embedding, bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Basis",
    "Ball",
    "Rect",
    "ExactCoord",
    "EmbeddedGraph",
    "GeneratorSpec",
    "GraphGenerationError",
    "generate",
    "restrict",
    "translate",
    "translate_point",
    "geometry_report",
    "GeometryReport",
    "dumps",
    "loads",
    "ball_volume",
    "get_basis",
]

FAMILIES = ("square", "triangular", "penrose", "ammann_beenker")


class GraphGenerationError(ValueError):
    """Raised when a generator spec is invalid or degenerate."""


def ball_volume(radius: float, dim: int = 2) -> float:
    """Lebesgue volume of a ball of the given radius (area, in the plane)."""
    if dim != 2:
        half = dim / 2.0
        return math.pi**half / math.gamma(half + 1.0) * radius**dim
    return math.pi * radius * radius


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class Basis:
    """Integer-coefficient basis for one graph family.

    ``vectors`` has one row per integer coefficient; the embedding of a
    coefficient vector k is sum_j k_j * vectors[j].  For the rank-4 bases the
    rows are linearly independent over the rationals, so the embedding is
    injective on integer vectors and exact equality of coefficients is the
    same as equality of embedded points.
    """

    id: str
    vectors: np.ndarray  # (rank, 2), read-only

    @property
    def rank(self) -> int:
        return self.vectors.shape[0]

    def embed(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed an (N, rank) integer array into the plane, deterministically.

        The sum is accumulated column by column in fixed order so repeated
        calls reproduce identical floats.
        """
        coeffs = np.atleast_2d(np.asarray(coeffs))
        out = np.zeros((coeffs.shape[0], 2))
        for j in range(self.rank):
            out[:, 0] += coeffs[:, j] * self.vectors[j, 0]
            out[:, 1] += coeffs[:, j] * self.vectors[j, 1]
        return out


def _make_basis(basis_id: str) -> Basis:
    if basis_id == "square":
        vecs = np.array([[1.0, 0.0], [0.0, 1.0]])
    elif basis_id == "triangular":
        vecs = np.array([[1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    elif basis_id == "penrose":
        # First four fifth roots of unity; the fifth is -(sum of these), so
        # every pentagrid vertex has a unique rank-4 coefficient vector.
        vecs = np.array(
            [
                [math.cos(2.0 * math.pi * j / 5.0), math.sin(2.0 * math.pi * j / 5.0)]
                for j in range(4)
            ]
        )
    elif basis_id == "ammann_beenker":
        vecs = np.array(
            [
                [math.cos(math.pi * j / 4.0), math.sin(math.pi * j / 4.0)]
                for j in range(4)
            ]
        )
    else:
        raise GraphGenerationError(f"unknown basis id: {basis_id!r}")
    vecs.flags.writeable = False
    return Basis(id=basis_id, vectors=vecs)


_BASES: dict[str, Basis] = {}


def get_basis(basis_id: str) -> Basis:
    if basis_id not in _BASES:
        _BASES[basis_id] = _make_basis(basis_id)
    return _BASES[basis_id]


# Declared infinite-graph geometry constants per family: half the minimal
# vertex separation, the maximal edge length, and the maximal vertex degree.
_FAMILY_GEOMETRY = {
    "square": {"r": 0.5, "l_max": 1.0, "d_max": 4},
    "triangular": {"r": 0.5, "l_max": 1.0, "d_max": 6},
    "penrose": {"r": math.sin(math.pi / 10.0), "l_max": 1.0, "d_max": 7},
    "ammann_beenker": {"r": math.sin(math.pi / 8.0), "l_max": 1.0, "d_max": 8},
}


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball."""

    center: tuple[float, float]
    radius: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        dx = points[:, 0] - self.center[0]
        dy = points[:, 1] - self.center[1]
        return dx * dx + dy * dy < self.radius * self.radius

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each (inside) point to the region boundary."""
        points = np.atleast_2d(points)
        dx = points[:, 0] - self.center[0]
        dy = points[:, 1] - self.center[1]
        return self.radius - np.sqrt(dx * dx + dy * dy)

    def translated(self, shift: np.ndarray) -> "Ball":
        return Ball(
            center=(self.center[0] + float(shift[0]), self.center[1] + float(shift[1])),
            radius=self.radius,
        )


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return (
            (points[:, 0] >= self.xmin)
            & (points[:, 0] <= self.xmax)
            & (points[:, 1] >= self.ymin)
            & (points[:, 1] <= self.ymax)
        )

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.minimum.reduce(
            [
                points[:, 0] - self.xmin,
                self.xmax - points[:, 0],
                points[:, 1] - self.ymin,
                self.ymax - points[:, 1],
            ]
        )

    def translated(self, shift: np.ndarray) -> "Rect":
        dx, dy = float(shift[0]), float(shift[1])
        return Rect(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)


Region = Ball | Rect


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class ExactCoord:
    """One vertex: integer coefficients in a named basis plus its embedding.

    Equality and hashing use only (basis_id, coeffs); the float embedding is
    a derived view and never participates in comparisons.
    """

    basis_id: str
    coeffs: tuple[int, ...]
    embed: tuple[float, float]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExactCoord):
            return NotImplemented
        return self.basis_id == other.basis_id and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash((self.basis_id, self.coeffs))


@dataclass
class EmbeddedGraph:
    """A finite patch with exact vertex coordinates and an edge list.

    ``coeffs`` is an (N, rank) int64 array sorted lexicographically by row;
    ``edges`` is an (M, 2) int64 array with each row (i, j), i < j, sorted
    lexicographically.  ``origin`` is a float offset added to every embedded
    vertex; it exists so that two patches can differ by a shift that is not
    representable in the integer module (used by the patch metric), and it
    defaults to zero.  The geometry constants r, l_max, d_max are declared
    values for the infinite graph the patch was cut from; ``geometry_report``
    re-measures them on the patch itself.
    """

    basis: Basis
    coeffs: np.ndarray
    edges: np.ndarray
    box: Region | None = None
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r: float = 0.0
    R_dense: float | None = None
    l_max: float = 0.0
    d_max: int = 0

    @property
    def n_vertices(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def embed(self) -> np.ndarray:
        pts = self.basis.embed(self.coeffs)
        pts[:, 0] += self.origin[0]
        pts[:, 1] += self.origin[1]
        pts.flags.writeable = False
        return pts

    @cached_property
    def coeff_index(self) -> dict[tuple[int, ...], int]:
        """Map coefficient tuple -> vertex index."""
        return {tuple(int(c) for c in row): i for i, row in enumerate(self.coeffs)}

    @cached_property
    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        """Map (i, j) with i < j -> position in the edge array."""
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    @cached_property
    def vertex_tree(self) -> cKDTree:
        return cKDTree(self.embed)

    def vertex(self, i: int) -> ExactCoord:
        return ExactCoord(
            basis_id=self.basis.id,
            coeffs=tuple(int(c) for c in self.coeffs[i]),
            embed=(float(self.embed[i, 0]), float(self.embed[i, 1])),
        )

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        if self.n_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def same_structure(self, other: "EmbeddedGraph") -> bool:
        """Exact structural equality: basis, coefficients, edges, origin."""
        return (
            self.basis.id == other.basis.id
            and self.coeffs.shape == other.coeffs.shape
            and np.array_equal(self.coeffs, other.coeffs)
            and self.edges.shape == other.edges.shape
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.origin, other.origin)
        )

    def validate(self) -> None:
        """Check the structural invariants; raise ValueError on violation."""
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != self.basis.rank:
            raise ValueError("coefficient array shape does not match basis rank")
        if self.n_edges:
            e = self.edges
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            if np.any(e < 0) or np.any(e >= self.n_vertices):
                raise ValueError("edge endpoint out of range")
            if len(self.edge_set) != self.n_edges:
                raise ValueError("duplicate edges")
            lengths = np.linalg.norm(
                self.embed[e[:, 0]] - self.embed[e[:, 1]], axis=1
            )
            if self.l_max and np.any(lengths > self.l_max + 1e-9):
                raise ValueError("edge longer than declared l_max")
        if len(self.coeff_index) != self.n_vertices:
            raise ValueError("duplicate vertex coefficients")
        deg = self.degrees()
        if self.d_max and deg.size and int(deg.max()) > self.d_max:
            raise ValueError("vertex degree exceeds declared d_max")

    def with_origin(self, origin: Sequence[float]) -> "EmbeddedGraph":
        """Copy of the patch embedded with a different float origin offset."""
        g = replace(self, origin=np.asarray(origin, dtype=float))
        g.__dict__.pop("embed", None)
        return g


def _finalize(
    basis: Basis,
    coeffs: np.ndarray,
    edges: np.ndarray,
    box: Region | None,
    geometry: dict,
    origin: np.ndarray | None = None,
) -> EmbeddedGraph:
    """Sort vertices lexicographically, remap and sort edges, build the graph."""
    coeffs = np.asarray(coeffs, dtype=np.int64).reshape(-1, basis.rank)
    n = coeffs.shape[0]
    if n:
        order = np.lexsort(coeffs.T[::-1])  # lexicographic by row
        coeffs = coeffs[order]
        inv = np.empty(n, dtype=np.int64)
        inv[order] = np.arange(n)
    else:
        inv = np.empty(0, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0]:
        edges = inv[edges]
        edges = np.sort(edges, axis=1)
        edges = np.unique(edges, axis=0)
    return EmbeddedGraph(
        basis=basis,
        coeffs=coeffs,
        edges=edges,
        box=box,
        origin=np.zeros(2) if origin is None else np.asarray(origin, dtype=float),
        r=geometry["r"],
        l_max=geometry["l_max"],
        d_max=geometry["d_max"],
    )


def from_coeffs(
    basis_id: str,
    coeffs: Iterable[Sequence[int]],
    edges: Iterable[Sequence[int]] = (),
    box: Region | None = None,
) -> EmbeddedGraph:
    """Build a patch directly from coefficient rows (mainly for tests).

    Geometry constants are measured from the data rather than declared.
    """
    basis = get_basis(basis_id)
    coeffs = np.asarray(list(coeffs), dtype=np.int64).reshape(-1, basis.rank)
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    g = _finalize(basis, coeffs, edges, box, {"r": 0.0, "l_max": 0.0, "d_max": 0})
    emb = g.embed
    if g.n_edges:
        lengths = np.linalg.norm(emb[g.edges[:, 0]] - emb[g.edges[:, 1]], axis=1)
        l_max = float(lengths.max())
    else:
        l_max = 0.0
    if g.n_vertices >= 2:
        tree = cKDTree(emb)
        dist, _ = tree.query(emb, k=2)
        r_half = float(dist[:, 1].min()) / 2.0
    else:
        r_half = math.inf
    deg = g.degrees()
    g.r = r_half
    g.l_max = l_max
    g.d_max = int(deg.max()) if deg.size else 0
    return g


# ---------------------------------------------------------------------------
# generation


# Dyadic offsets summing to zero exactly; validated as non-degenerate below.
DEFAULT_PENTAGRID_OFFSETS = (0.28125, 0.4375, -0.34375, 0.15625, -0.53125)
DEFAULT_WINDOW_SHIFT = (0.00123291015625, 0.00271484375)


@dataclass(frozen=True)
class GeneratorSpec:
    """Deterministic description of a patch to generate.

    ``radius`` is the open-ball cut-off: the patch is the induced subgraph on
    vertices with |embedding| < radius.  ``pentagrid_offsets`` are the five
    grid phases of the rhombus-tiling generator (must sum to zero);
    ``window_shift`` displaces the acceptance window of the cut-and-project
    generator away from lattice-degenerate positions.
    """

    family: str
    radius: float
    pentagrid_offsets: tuple[float, ...] = DEFAULT_PENTAGRID_OFFSETS
    window_shift: tuple[float, float] = DEFAULT_WINDOW_SHIFT

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise GraphGenerationError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        if not (self.radius > 0.0):
            raise GraphGenerationError("radius must be positive")
        if self.family == "penrose":
            if len(self.pentagrid_offsets) != 5:
                raise GraphGenerationError("pentagrid needs exactly 5 offsets")
            if abs(math.fsum(self.pentagrid_offsets)) > 1e-12:
                raise GraphGenerationError(
                    "pentagrid offsets must sum to zero (|sum| <= 1e-12)"
                )


def generate(spec: GeneratorSpec) -> EmbeddedGraph:
    """Generate the patch described by ``spec``.

    The result is the induced subgraph of the infinite graph on the open ball
    of the requested radius around the origin, with vertices sorted by
    coefficient vector.  Repeated calls return identical graphs.
    """
    spec.validate()
    if spec.family == "square":
        g = _generate_lattice(spec, "square", [(1, 0), (0, 1)])
    elif spec.family == "triangular":
        g = _generate_lattice(spec, "triangular", [(1, 0), (0, 1), (1, -1)])
    elif spec.family == "penrose":
        g = _generate_pentagrid(spec)
    else:
        g = _generate_cut_and_project(spec)
    return g


def _generate_lattice(
    spec: GeneratorSpec, basis_id: str, neighbor_steps: list[tuple[int, int]]
) -> EmbeddedGraph:
    basis = get_basis(basis_id)
    n = spec.radius
    # Conservative coefficient range: both basis vectors have unit length and
    # the Gram matrix is well conditioned, so |k| <= 2n + 2 covers the ball.
    kmax = int(math.ceil(2.0 * n + 2.0))
    ks = np.arange(-kmax, kmax + 1)
    ki, kj = np.meshgrid(ks, ks, indexing="ij")
    coeffs = np.stack([ki.ravel(), kj.ravel()], axis=1).astype(np.int64)
    pts = basis.embed(coeffs)
    mask = pts[:, 0] ** 2 + pts[:, 1] ** 2 < n * n
    coeffs = coeffs[mask]
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(coeffs)}
    edges = []
    for (a, b), i in index.items():
        for da, db in neighbor_steps:
            j = index.get((a + da, b + db))
            if j is not None:
                edges.append((i, j))
    g = _finalize(
        basis, coeffs, np.array(edges, dtype=np.int64).reshape(-1, 2),
        Ball((0.0, 0.0), n), _FAMILY_GEOMETRY[basis_id],
    )
    return g


def _generate_pentagrid(spec: GeneratorSpec) -> EmbeddedGraph:
    """Rhombus tiling from a regular pentagrid.

    Five line grids with unit normals at angles 2*pi*j/5 and phases gamma_j;
    each pairwise line intersection is dual to one unit-edge rhombus whose
    four corners are integer combinations of the five unit vectors.  Corners
    are deduplicated exactly through their rank-4 coefficient vectors.
    """
    basis = get_basis("penrose")
    n = spec.radius
    gamma = np.array(spec.pentagrid_offsets, dtype=float)
    zeta = np.array(
        [
            [math.cos(2.0 * math.pi * j / 5.0), math.sin(2.0 * math.pi * j / 5.0)]
            for j in range(5)
        ]
    )
    reach = n + 3.0  # rhombus corners sit within ~2.4 of the grid intersection
    vertex_ids: dict[tuple[int, int, int, int], int] = {}
    vertex_rows: list[tuple[int, int, int, int]] = []
    edge_keys: set[tuple[int, int]] = set()

    def vertex_id(k5: np.ndarray) -> int:
        key = (
            int(k5[0] - k5[4]),
            int(k5[1] - k5[4]),
            int(k5[2] - k5[4]),
            int(k5[3] - k5[4]),
        )
        vid = vertex_ids.get(key)
        if vid is None:
            vid = len(vertex_rows)
            vertex_ids[key] = vid
            vertex_rows.append(key)
        return vid

    kmax = int(math.ceil(reach + 1.0))
    for r in range(5):
        for s in range(r + 1, 5):
            det = zeta[r, 0] * zeta[s, 1] - zeta[r, 1] * zeta[s, 0]
            for kr in range(-kmax, kmax + 1):
                cr = kr + gamma[r]
                if abs(cr) > reach:
                    continue
                for ks_ in range(-kmax, kmax + 1):
                    cs = ks_ + gamma[s]
                    if abs(cs) > reach:
                        continue
                    # Solve x . zeta_r = cr, x . zeta_s = cs.
                    x = (
                        (cr * zeta[s, 1] - cs * zeta[r, 1]) / det,
                        (cs * zeta[r, 0] - cr * zeta[s, 0]) / det,
                    )
                    if x[0] * x[0] + x[1] * x[1] > reach * reach:
                        continue
                    base = np.empty(5, dtype=np.int64)
                    degenerate = False
                    for m in range(5):
                        if m == r or m == s:
                            continue
                        t = x[0] * zeta[m, 0] + x[1] * zeta[m, 1] - gamma[m]
                        if abs(t - round(t)) < 1e-9:
                            degenerate = True
                            break
                        base[m] = int(math.ceil(t))
                    if degenerate:
                        raise GraphGenerationError(
                            "degenerate pentagrid offsets: three grid lines "
                            f"meet near {x}; perturb the offsets"
                        )
                    corners = np.empty(4, dtype=np.int64)
                    for idx, (er, es) in enumerate(
                        ((0, 0), (1, 0), (0, 1), (1, 1))
                    ):
                        k5 = base.copy()
                        k5[r] = kr + er
                        k5[s] = ks_ + es
                        corners[idx] = vertex_id(k5)
                    for a, b in ((0, 1), (0, 2), (1, 3), (2, 3)):
                        u, v = corners[a], corners[b]
                        edge_keys.add((u, v) if u < v else (v, u))

    coeffs = np.array(vertex_rows, dtype=np.int64).reshape(-1, 4)
    pts = basis.embed(coeffs)
    keep = pts[:, 0] ** 2 + pts[:, 1] ** 2 < n * n
    new_index = -np.ones(coeffs.shape[0], dtype=np.int64)
    new_index[keep] = np.arange(int(keep.sum()))
    edges = [
        (new_index[u], new_index[v])
        for u, v in sorted(edge_keys)
        if keep[u] and keep[v]
    ]
    return _finalize(
        basis, coeffs[keep], np.array(edges, dtype=np.int64).reshape(-1, 2),
        Ball((0.0, 0.0), n), _FAMILY_GEOMETRY["penrose"],
    )


def _ab_projections() -> tuple[np.ndarray, np.ndarray]:
    phys = np.array(
        [[math.cos(math.pi * j / 4.0), math.sin(math.pi * j / 4.0)] for j in range(4)]
    )
    internal = np.array(
        [
            [math.cos(3.0 * math.pi * j / 4.0), math.sin(3.0 * math.pi * j / 4.0)]
            for j in range(4)
        ]
    )
    return phys, internal


def _generate_cut_and_project(spec: GeneratorSpec) -> EmbeddedGraph:
    """Octagonal tiling: project Z^4 points whose internal image falls in a
    regular-octagon window; connect images of points differing by a lattice
    unit vector (unit physical distance)."""
    basis = get_basis("ammann_beenker")
    n = spec.radius
    phys, internal = _ab_projections()
    shift = np.asarray(spec.window_shift, dtype=float)

    # Octagon window: zonotope of the four internal unit vectors, centered.
    center = internal.sum(axis=0) / 2.0
    apothem = (1.0 + math.sqrt(2.0)) / 2.0
    normals = np.array(
        [[math.cos(a), math.sin(a)] for a in (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)]
    )

    def window_accept(y: np.ndarray) -> np.ndarray:
        z = y - center + shift
        proj = np.abs(z @ normals.T)
        dist = apothem - proj.max(axis=1)
        if np.any(np.abs(dist) < 1e-9):
            raise GraphGenerationError(
                "window shift puts lattice points on the window boundary; "
                "perturb window_shift"
            )
        return dist > 0.0

    # Coefficient box: n = M^{-1} (x; y) with M stacking both projections.
    m = np.vstack([phys.T, internal.T])  # maps n -> (x, y)
    minv = np.linalg.inv(m)
    target = np.array([n + 1.0, n + 1.0, 2.2, 2.2])
    bound = np.abs(minv) @ target
    kmax = int(math.ceil(bound.max()))

    ks = np.arange(-kmax, kmax + 1)
    accepted: list[np.ndarray] = []
    for k0 in ks:  # chunk over the first coordinate to bound memory
        k1, k2, k3 = np.meshgrid(ks, ks, ks, indexing="ij")
        chunk = np.stack(
            [np.full(k1.size, k0), k1.ravel(), k2.ravel(), k3.ravel()], axis=1
        ).astype(np.int64)
        x = chunk @ phys
        mask = x[:, 0] ** 2 + x[:, 1] ** 2 < (n + 1.0) ** 2
        chunk = chunk[mask]
        if not chunk.shape[0]:
            continue
        y = chunk @ internal
        chunk = chunk[window_accept(y)]
        if chunk.shape[0]:
            accepted.append(chunk)
    if accepted:
        coeffs = np.concatenate(accepted, axis=0)
    else:
        coeffs = np.empty((0, 4), dtype=np.int64)

    pts = coeffs @ phys
    keep = pts[:, 0] ** 2 + pts[:, 1] ** 2 < n * n
    coeffs = coeffs[keep]
    index = {tuple(int(c) for c in row): i for i, row in enumerate(coeffs)}
    edges = []
    for row, i in index.items():
        for axis in range(4):
            nb = list(row)
            nb[axis] += 1
            j = index.get(tuple(nb))
            if j is not None:
                d = np.linalg.norm(phys[axis])
                if abs(d - 1.0) > 1e-9:  # all four steps embed with unit length
                    continue
                edges.append((i, j))
    return _finalize(
        basis, coeffs, np.array(edges, dtype=np.int64).reshape(-1, 2),
        Ball((0.0, 0.0), n), _FAMILY_GEOMETRY["ammann_beenker"],
    )


# ---------------------------------------------------------------------------
# operations


def restrict(g: EmbeddedGraph, region: Region) -> EmbeddedGraph:
    """Induced subgraph on the vertices inside ``region``.

    The result's box is the region; restricting a patch to its own box is the
    identity.  Restriction only ever removes data, so the caller is trusted
    not to pass a region larger than the patch's known extent.
    """
    mask = region.contains(g.embed)
    new_index = -np.ones(g.n_vertices, dtype=np.int64)
    new_index[mask] = np.arange(int(mask.sum()))
    coeffs = g.coeffs[mask]
    if g.n_edges:
        emask = mask[g.edges[:, 0]] & mask[g.edges[:, 1]]
        edges = new_index[g.edges[emask]]
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return EmbeddedGraph(
        basis=g.basis,
        coeffs=coeffs,
        edges=edges,
        box=region,
        origin=g.origin.copy(),
        r=g.r,
        R_dense=g.R_dense,
        l_max=g.l_max,
        d_max=g.d_max,
    )


def translate(g: EmbeddedGraph, coeff_shift: Sequence[int]) -> EmbeddedGraph:
    """Translate by an exact element of the coefficient module.

    Vertex order is unchanged (adding a constant preserves lexicographic
    order), the box shifts by the embedded translation vector.
    """
    shift = np.asarray(coeff_shift, dtype=np.int64)
    if shift.shape != (g.basis.rank,):
        raise ValueError(
            f"translation needs {g.basis.rank} integer coefficients, got {shift.shape}"
        )
    emb_shift = g.basis.embed(shift.reshape(1, -1))[0]
    return EmbeddedGraph(
        basis=g.basis,
        coeffs=g.coeffs + shift,
        edges=g.edges.copy(),
        box=g.box.translated(emb_shift) if g.box is not None else None,
        origin=g.origin.copy(),
        r=g.r,
        R_dense=g.R_dense,
        l_max=g.l_max,
        d_max=g.d_max,
    )


def translate_point(g: EmbeddedGraph, xy: Sequence[float], tol: float = 1e-9) -> EmbeddedGraph:
    """Translate by a plane vector, which must be exactly representable.

    For rank-2 bases the coefficient vector is solved directly.  For rank-4
    bases the embedding is not invertible, so the vector is resolved against
    differences of existing patch vertices; a vector that matches none of
    them within ``tol`` is rejected.
    """
    xy = np.asarray(xy, dtype=float)
    basis = g.basis
    if basis.rank == 2:
        sol = np.linalg.solve(basis.vectors.T, xy)
        rounded = np.rint(sol)
        if np.max(np.abs(sol - rounded)) > tol:
            raise ValueError(
                f"{tuple(xy)} is not an exact lattice translation for basis "
                f"{basis.id!r}"
            )
        return translate(g, rounded.astype(np.int64))
    if g.n_vertices == 0:
        raise ValueError("cannot resolve a translation against an empty patch")
    emb = g.embed
    # Probe a few central vertices; a representable shift maps at least one
    # of them onto another patch vertex as long as it is not too large.
    key_of = {}
    scale = 1.0 / tol
    for i in range(g.n_vertices):
        key_of[(round(emb[i, 0] * scale), round(emb[i, 1] * scale))] = i
    central = np.argsort(emb[:, 0] ** 2 + emb[:, 1] ** 2)[:32]
    for i in central:
        target = emb[i] + xy
        j = key_of.get((round(target[0] * scale), round(target[1] * scale)))
        if j is None:
            continue
        shift = g.coeffs[j] - g.coeffs[i]
        check = basis.embed(shift.reshape(1, -1))[0]
        if np.max(np.abs(check - xy)) <= tol:
            return translate(g, shift)
    raise ValueError(
        f"{tuple(xy)} is not representable in the {basis.id!r} coefficient module"
    )


@dataclass
class GeometryReport:
    vertex_count: int
    edge_count: int
    min_pairwise_distance: float
    r: float
    l_max: float
    d_max: int
    degree_histogram: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "vertex_count": self.vertex_count,
            "edge_count": self.edge_count,
            "min_pairwise_distance": self.min_pairwise_distance,
            "r": self.r,
            "l_max": self.l_max,
            "d_max": self.d_max,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
        }


def geometry_report(g: EmbeddedGraph) -> GeometryReport:
    """Measure the patch geometry: minimal vertex separation (via an exact
    nearest-neighbor query), maximal edge length, degree statistics.

    A single-vertex patch reports r = +inf and l_max = 0."""
    if g.n_vertices >= 2:
        tree = cKDTree(g.embed)
        dist, _ = tree.query(g.embed, k=2)
        min_dist = float(dist[:, 1].min())
        r_half = min_dist / 2.0
    else:
        min_dist = math.inf
        r_half = math.inf
    if g.n_edges:
        lengths = np.linalg.norm(g.embed[g.edges[:, 0]] - g.embed[g.edges[:, 1]], axis=1)
        l_max = float(lengths.max())
    else:
        l_max = 0.0
    deg = g.degrees()
    hist: dict[int, int] = {}
    for d in deg:
        hist[int(d)] = hist.get(int(d), 0) + 1
    return GeometryReport(
        vertex_count=g.n_vertices,
        edge_count=g.n_edges,
        min_pairwise_distance=min_dist,
        r=r_half,
        l_max=l_max,
        d_max=int(deg.max()) if deg.size else 0,
        degree_histogram=hist,
    )


# ---------------------------------------------------------------------------
# serialization


def dumps(g: EmbeddedGraph) -> str:
    """Line format: ``basis <id> d <dim> n <count> m <count>`` header, then
    ``v <index> <coeffs...>`` and ``e <i> <j>`` lines.  Integer-exact, so the
    round trip is bit-exact."""
    lines = [f"basis {g.basis.id} d 2 n {g.n_vertices} m {g.n_edges}"]
    for i in range(g.n_vertices):
        coeff_str = " ".join(str(int(c)) for c in g.coeffs[i])
        lines.append(f"v {i} {coeff_str}")
    for a, b in g.edges:
        lines.append(f"e {int(a)} {int(b)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> EmbeddedGraph:
    """Parse the line format produced by :func:`dumps`.

    The loaded patch has no box (the serialization does not carry one) and a
    zero origin; geometry constants are re-measured from the data."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty graph serialization")
    header = lines[0].split()
    if len(header) != 8 or header[0] != "basis" or header[2] != "d" or header[4] != "n" or header[6] != "m":
        raise ValueError(f"malformed header: {lines[0]!r}")
    basis_id = header[1]
    n_vertices = int(header[5])
    n_edges = int(header[7])
    basis = get_basis(basis_id)
    coeffs = np.zeros((n_vertices, basis.rank), dtype=np.int64)
    edges = np.zeros((n_edges, 2), dtype=np.int64)
    seen_v = 0
    seen_e = 0
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "v":
            idx = int(parts[1])
            vals = [int(x) for x in parts[2:]]
            if len(vals) != basis.rank:
                raise ValueError(f"vertex line has {len(vals)} coefficients, basis rank is {basis.rank}")
            coeffs[idx] = vals
            seen_v += 1
        elif parts[0] == "e":
            edges[seen_e] = (int(parts[1]), int(parts[2]))
            seen_e += 1
        else:
            raise ValueError(f"unknown line type: {ln!r}")
    if seen_v != n_vertices or seen_e != n_edges:
        raise ValueError(
            f"header promised {n_vertices} vertices / {n_edges} edges, "
            f"found {seen_v} / {seen_e}"
        )
    g = from_coeffs(basis_id, coeffs, edges, box=None)
    return g
