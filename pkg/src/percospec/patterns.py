"""Local pattern census, occurrence counting, and empirical frequencies.

An r-pattern is the induced subgraph on the vertices within distance r of a
center vertex, stored translation-invariantly: coordinates are integer
coefficient vectors relative to the lexicographically least vertex, so two
patterns are equal (as dictionary keys) iff they are exact translates of each
other.  Occurrence counting uses subgraph containment: a translate x + P sits
inside G when every pattern vertex lands on a graph vertex and every pattern
edge (with its colour, if any) is present.

Frequencies are counts per unit volume of the counting ball; the census is
the empirical face of finite local complexity, and the per-radius frequency
series is the empirical face of pattern frequencies and vertex densities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graphs import Ball, EmbeddedGraph, ball_volume

__all__ = [
    "CanonicalPattern",
    "PatternCensus",
    "FrequencyReport",
    "DensityReport",
    "extract_r_patterns",
    "pattern_at",
    "count_occurrences",
    "occurrence_plan",
    "coloured_count",
    "frequency_series",
    "coloured_frequency",
    "positive_lower_frequency_check",
    "density_report",
    "graph_distance",
]


@dataclass(frozen=True)
class CanonicalPattern:
    """A finite pattern in translation-normal form.

    ``coords`` are integer coefficient tuples sorted lexicographically with
    the least one at the origin; ``edges`` are index pairs into ``coords``
    (i < j, sorted); ``colours`` optionally labels each edge (aligned with
    ``edges``).  Hashable, so patterns can key dictionaries directly.
    """

    basis_id: str
    coords: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    colours: tuple[int, ...] | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def uncoloured(self) -> "CanonicalPattern":
        if self.colours is None:
            return self
        return CanonicalPattern(self.basis_id, self.coords, self.edges, None)

    def with_colours(self, colours: Sequence[int]) -> "CanonicalPattern":
        if len(colours) != len(self.edges):
            raise ValueError("need one colour per edge")
        return CanonicalPattern(
            self.basis_id, self.coords, self.edges, tuple(int(c) for c in colours)
        )


def canonicalize(
    basis_id: str,
    coords: Iterable[Sequence[int]],
    edges: Iterable[Sequence[int]] = (),
    colours: Sequence[int] | None = None,
) -> CanonicalPattern:
    """Normalize: sort vertices, anchor the lex-least at the origin, remap
    and sort edges (colours follow their edges)."""
    rows = [tuple(int(c) for c in row) for row in coords]
    order = sorted(range(len(rows)), key=lambda i: rows[i])
    inv = {old: new for new, old in enumerate(order)}
    anchor = rows[order[0]] if rows else ()
    normed = tuple(
        tuple(c - a for c, a in zip(rows[i], anchor)) for i in order
    )
    edge_list = []
    for k, (i, j) in enumerate(edges):
        a, b = inv[int(i)], inv[int(j)]
        if a > b:
            a, b = b, a
        edge_list.append(((a, b), None if colours is None else int(colours[k])))
    edge_list.sort(key=lambda t: t[0])
    return CanonicalPattern(
        basis_id=basis_id,
        coords=normed,
        edges=tuple(e for e, _ in edge_list),
        colours=None if colours is None else tuple(c for _, c in edge_list),
    )


def pattern_at(g: EmbeddedGraph, center: int, radius: float) -> CanonicalPattern:
    """Induced r-pattern around one vertex (the caller guarantees that the
    ball lies inside the patch)."""
    members = sorted(g.vertex_tree.query_ball_point(g.embed[center], radius))
    # strict inequality: the pattern ball is open, mirroring patch cut-off
    members = [
        i
        for i in members
        if float(np.hypot(*(g.embed[i] - g.embed[center]))) < radius
    ]
    member_set = set(members)
    local = {v: k for k, v in enumerate(members)}
    edges = [
        (local[a], local[b])
        for a, b in g.edges
        if int(a) in member_set and int(b) in member_set
    ]
    return canonicalize(
        g.basis.id, [g.coeffs[i] for i in members], edges
    )


@dataclass
class PatternCensus:
    radius: float
    counts: dict[CanonicalPattern, int]
    eligible_centers: int

    @property
    def distinct(self) -> int:
        return len(self.counts)

    def most_common(self, k: int | None = None) -> list[tuple[CanonicalPattern, int]]:
        items = sorted(
            self.counts.items(), key=lambda kv: (-kv[1], kv[0].coords, kv[0].edges)
        )
        return items if k is None else items[:k]


def extract_r_patterns(g: EmbeddedGraph, radius: float) -> PatternCensus:
    """Census of r-patterns over all centers whose pattern ball lies fully
    inside the patch (interior centers only, so no pattern is truncated)."""
    if g.box is None:
        raise ValueError("patch has no box; cannot determine interior centers")
    if radius <= 0.0:
        raise ValueError("pattern radius must be positive")
    margin = g.box.boundary_distance(g.embed)
    eligible = np.flatnonzero(margin > radius)
    counts: dict[CanonicalPattern, int] = {}
    for center in eligible:
        p = pattern_at(g, int(center), radius)
        counts[p] = counts.get(p, 0) + 1
    return PatternCensus(radius=radius, counts=counts, eligible_centers=len(eligible))


# ---------------------------------------------------------------------------
# occurrence counting


def _resolve_translate(
    g: EmbeddedGraph, p: CanonicalPattern, anchor_vertex: int
) -> tuple[int, ...] | None:
    """Map the pattern anchor onto ``anchor_vertex``; return the tuple of
    graph edge indices hit by the pattern edges, or None if the translate
    does not embed as a subgraph."""
    base = g.coeffs[anchor_vertex]
    idx = g.coeff_index
    vids = []
    for rel in p.coords:
        target = tuple(int(b + r) for b, r in zip(base, rel))
        vid = idx.get(target)
        if vid is None:
            return None
        vids.append(vid)
    eidx = g.edge_index
    hits = []
    for a, b in p.edges:
        u, v = vids[a], vids[b]
        if u > v:
            u, v = v, u
        e = eidx.get((u, v))
        if e is None:
            return None
        hits.append(e)
    return tuple(hits)


@dataclass
class OccurrencePlan:
    """Pre-resolved uncoloured occurrences of a pattern inside a counting
    ball: one row of graph edge indices per translate.  Colour tests against
    a bond configuration then reduce to indexed comparisons."""

    pattern: CanonicalPattern
    counting_radius: float
    edge_hits: np.ndarray  # (T, n_edges) int64, n_edges may be 0
    n_translates: int

    def coloured_count(self, open_mask: np.ndarray, colours: Sequence[int]) -> int:
        if self.n_translates == 0 or self.pattern.n_edges == 0:
            return self.n_translates
        want = np.asarray(colours, dtype=bool)
        got = open_mask[self.edge_hits]
        return int(np.all(got == want[None, :], axis=1).sum())


def occurrence_plan(
    p: CanonicalPattern, g: EmbeddedGraph, counting_radius: float
) -> OccurrencePlan:
    """Enumerate the exact translates x with x + P inside the patch and all
    pattern vertices inside the open counting ball at the origin."""
    pu = p.uncoloured()
    if pu.basis_id != g.basis.id:
        return OccurrencePlan(pu, counting_radius, np.empty((0, pu.n_edges), np.int64), 0)
    ball = Ball((0.0, 0.0), counting_radius)
    inside = ball.contains(g.embed)
    rows = []
    for anchor in np.flatnonzero(inside):
        hits = _resolve_translate(g, pu, int(anchor))
        if hits is None:
            continue
        # all vertices of the translate must lie in the counting ball
        base = g.coeffs[anchor]
        ok = True
        for rel in pu.coords:
            vid = g.coeff_index[tuple(int(b + r) for b, r in zip(base, rel))]
            if not inside[vid]:
                ok = False
                break
        if ok:
            rows.append(hits)
    edge_hits = (
        np.array(rows, dtype=np.int64).reshape(len(rows), pu.n_edges)
        if rows
        else np.empty((0, pu.n_edges), dtype=np.int64)
    )
    return OccurrencePlan(pu, counting_radius, edge_hits, len(rows))


def count_occurrences(
    p: CanonicalPattern,
    g: EmbeddedGraph,
    counting_radius: float,
    open_mask: np.ndarray | None = None,
) -> int:
    """Number of exact translates of ``p`` inside the counting ball.

    With a coloured pattern an ``open_mask`` (bond configuration over the
    graph's edge order) must be supplied, and each pattern edge must match
    its colour: 1 = open, 0 = closed.
    """
    plan = occurrence_plan(p, g, counting_radius)
    if p.colours is None:
        return plan.n_translates
    if open_mask is None:
        raise ValueError("coloured pattern counting needs a bond configuration")
    return plan.coloured_count(np.asarray(open_mask, dtype=bool), p.colours)


coloured_count = count_occurrences


@dataclass
class FrequencyReport:
    radii: list[float]
    counts: list[int]
    volumes: list[float]
    frequencies: list[float]
    nu_hat: float
    spread_halfwidth: float

    def as_rows(self, pattern_radius: float) -> list[tuple]:
        return [
            (pattern_radius, n, c, v, f)
            for n, c, v, f in zip(self.radii, self.counts, self.volumes, self.frequencies)
        ]


def frequency_series(
    p: CanonicalPattern,
    g: EmbeddedGraph,
    radii: Sequence[float],
    open_mask: np.ndarray | None = None,
) -> FrequencyReport:
    """Per-volume occurrence counts over a ladder of counting radii, with a
    tail-extrapolated frequency estimate.

    ``nu_hat`` is the mean over the last quartile of the ladder and the
    spread is half the max-min range over that quartile."""
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise ValueError("need at least one counting radius")
    counts = [count_occurrences(p, g, r, open_mask) for r in radii]
    volumes = [ball_volume(r) for r in radii]
    freqs = [c / v for c, v in zip(counts, volumes)]
    q = max(1, len(radii) // 4)
    tail = freqs[-q:]
    nu_hat = float(np.mean(tail))
    spread = (max(tail) - min(tail)) / 2.0
    return FrequencyReport(radii, counts, volumes, freqs, nu_hat, spread)


def coloured_frequency(
    p: CanonicalPattern,
    g: EmbeddedGraph,
    open_mask: np.ndarray,
    radii: Sequence[float],
) -> FrequencyReport:
    """Frequency series of a coloured pattern in one bond configuration."""
    if p.colours is None:
        raise ValueError("pattern has no colours; use frequency_series")
    return frequency_series(p, g, radii, open_mask)


def positive_lower_frequency_check(
    p: CanonicalPattern,
    g: EmbeddedGraph,
    radii: Sequence[float],
) -> tuple[bool, float]:
    """Empirical support for a positive lower pattern frequency: the minimum
    per-volume frequency over the last half of the radius ladder, and whether
    it is strictly positive."""
    report = frequency_series(p, g, radii)
    half = report.frequencies[len(report.frequencies) // 2 :]
    lower = float(min(half)) if half else 0.0
    return lower > 0.0, lower


# ---------------------------------------------------------------------------
# densities


@dataclass
class DensityReport:
    radii: list[float]
    rho: list[float]
    rho_infinity: list[float]
    rho_hat: float
    rho_infinity_hat: float


def density_report(
    g: EmbeddedGraph, radii: Sequence[float]
) -> DensityReport:
    """Vertex density and density of vertices in unbounded clusters.

    "Unbounded" is proxied on the finite patch by components that come
    within l_max of the patch boundary; for a patch with no edges nothing
    touches, so the unbounded density is zero.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if g.box is None:
        raise ValueError("patch has no box")
    radii = sorted(float(r) for r in radii)
    n = g.n_vertices
    if g.n_edges:
        m = coo_matrix(
            (np.ones(g.n_edges), (g.edges[:, 0], g.edges[:, 1])), shape=(n, n)
        )
        _, labels = connected_components(m, directed=False)
    else:
        labels = np.arange(n)
    touches_boundary = g.box.boundary_distance(g.embed) < g.l_max
    n_labels = int(labels.max()) + 1 if n else 0
    cluster_touches = np.zeros(n_labels, dtype=bool)
    np.maximum.at(cluster_touches, labels, touches_boundary)
    vertex_unbounded = cluster_touches[labels] if n else np.zeros(0, dtype=bool)

    dist0 = np.hypot(g.embed[:, 0], g.embed[:, 1]) if n else np.zeros(0)
    rho, rho_inf = [], []
    for r in radii:
        inside = dist0 < r
        vol = ball_volume(r)
        rho.append(float(inside.sum()) / vol)
        rho_inf.append(float((inside & vertex_unbounded).sum()) / vol)
    q = max(1, len(radii) // 4)
    return DensityReport(
        radii=radii,
        rho=rho,
        rho_infinity=rho_inf,
        rho_hat=float(np.mean(rho[-q:])),
        rho_infinity_hat=float(np.mean(rho_inf[-q:])),
    )


# ---------------------------------------------------------------------------
# patch metric


def _usable_radius(g: EmbeddedGraph) -> float:
    """Radius around the origin within which the patch is a faithful window
    of its infinite graph."""
    if g.box is None:
        raise ValueError("patch has no box")
    if isinstance(g.box, Ball):
        c = np.hypot(g.box.center[0], g.box.center[1])
        return g.box.radius - c
    return float(
        min(
            -g.box.xmin, g.box.xmax, -g.box.ymin, g.box.ymax
        )
    )


def graph_distance(
    g1: EmbeddedGraph,
    g2: EmbeddedGraph,
    shift_search_radius: float = 2.0,
    iterations: int = 40,
) -> float:
    """Distance in the local matching topology, capped at 2**-1/2.

    Two patches are at distance < eps when small shifts x, y (|x|, |y| < eps)
    make them agree exactly on the ball of radius 1/eps.  Candidate relative
    shifts are differences of exact vertex coordinates near the origin (plus
    the zero shift), the float origins riding along.  The search bisects on
    eps down to the resolution floor 1/(usable patch radius).
    """
    cap = 2.0 ** -0.5
    if g1.basis.id != g2.basis.id:
        raise ValueError("patch metric requires a common coefficient basis")
    floor = 1.0 / min(_usable_radius(g1), _usable_radius(g2))
    if floor >= cap:
        return cap

    near1 = np.flatnonzero(
        np.hypot(g1.embed[:, 0], g1.embed[:, 1]) <= shift_search_radius
    )
    near2 = np.flatnonzero(
        np.hypot(g2.embed[:, 0], g2.embed[:, 1]) <= shift_search_radius
    )
    deltas: dict[tuple[int, ...], np.ndarray] = {}
    zero = tuple(0 for _ in range(g1.basis.rank))
    origin_gap = g1.origin - g2.origin
    deltas[zero] = g1.basis.embed(np.zeros((1, g1.basis.rank)))[0] + origin_gap
    for i in near1:
        for j in near2:
            d = tuple(int(c) for c in (g1.coeffs[i] - g2.coeffs[j]))
            if d not in deltas:
                deltas[d] = (
                    g1.basis.embed(np.asarray(d).reshape(1, -1))[0] + origin_gap
                )
    # drop shifts that can never fit below the cap
    deltas = {
        d: v for d, v in deltas.items() if float(np.hypot(*v)) < 2.0 * cap
    }

    def agree(eps: float) -> bool:
        rho = 1.0 / eps
        for d, vec in deltas.items():
            if float(np.hypot(*vec)) >= 2.0 * eps:
                continue
            mid = vec / 2.0
            # the comparison ball must stay inside both known windows
            if rho + float(np.hypot(*mid)) > min(_usable_radius(g1), _usable_radius(g2)) + 1e-9:
                continue
            if _patterns_agree(g1, g2, d, vec, mid, rho):
                return True
        return False

    if not agree(cap - 1e-12):
        return cap
    lo, hi = floor, cap - 1e-12
    if agree(lo):
        return lo
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if agree(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _patterns_agree(
    g1: EmbeddedGraph,
    g2: EmbeddedGraph,
    delta_coeffs: tuple[int, ...],
    delta_vec: np.ndarray,
    center: np.ndarray,
    rho: float,
) -> bool:
    """Exact equality of g1 and (delta + g2) on the ball B_rho(center)."""
    d1 = g1.embed - center[None, :]
    in1 = np.flatnonzero(d1[:, 0] ** 2 + d1[:, 1] ** 2 < rho * rho)
    d2 = g2.embed + delta_vec[None, :] - center[None, :]
    in2 = np.flatnonzero(d2[:, 0] ** 2 + d2[:, 1] ** 2 < rho * rho)
    if in1.size != in2.size:
        return False
    shift = np.asarray(delta_coeffs, dtype=np.int64)
    set1 = {tuple(int(c) for c in g1.coeffs[i]) for i in in1}
    set2 = {tuple(int(c) for c in (g2.coeffs[j] + shift)) for j in in2}
    if set1 != set2:
        return False
    in1_set = set(int(i) for i in in1)
    edges1 = {
        (tuple(int(c) for c in g1.coeffs[a]), tuple(int(c) for c in g1.coeffs[b]))
        for a, b in g1.edges
        if int(a) in in1_set and int(b) in in1_set
    }
    in2_set = set(int(j) for j in in2)
    edges2 = {
        (
            tuple(int(c) for c in (g2.coeffs[a] + shift)),
            tuple(int(c) for c in (g2.coeffs[b] + shift)),
        )
        for a, b in g2.edges
        if int(a) in in2_set and int(b) in in2_set
    }
    return edges1 == edges2
