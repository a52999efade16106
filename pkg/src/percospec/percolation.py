"""Bernoulli bond percolation on a patch: sampling, clusters, decay statistics.

Each edge of the patch is kept open with probability p, independently.  The
randomness comes from a counter-based generator keyed on (master seed,
realization index), so any realization can be regenerated in isolation, in
any order, on any number of workers, with identical output.  Sharing the
per-edge uniforms across p gives the standard monotone coupling: the open
set at p is contained in the open set at p' >= p, edge by edge.

Cluster statistics are averaged over interior vertices only (far enough from
the patch boundary that the relevant events are decided inside the patch)
and over independent realizations; standard errors come from the spread of
the per-realization means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graphs import EmbeddedGraph

__all__ = [
    "PercolationParams",
    "BondConfiguration",
    "ClusterDecomposition",
    "TailEstimate",
    "BoundsReport",
    "edge_uniforms",
    "sample",
    "decompose",
    "cluster_size_tail",
    "boundary_path_probability",
    "boundary_path_bound",
    "mean_cluster_size",
    "gamma_rate",
    "psi_rate",
    "bounds_report",
    "bruteforce_cluster_oracle",
]


@dataclass(frozen=True)
class PercolationParams:
    """Bond probability, seed, and realization budget for an experiment."""

    p: float
    master_seed: int
    realizations: int = 1

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"bond probability must lie in [0, 1], got {self.p}")
        if self.realizations < 1:
            raise ValueError("need at least one realization")


def edge_uniforms(n_edges: int, master_seed: int, realization_index: int) -> np.ndarray:
    """The uniform variables attached to the edges of one realization.

    Counter-based (Philox) and keyed on (master_seed, realization_index):
    the full vector is a pure function of the key, independent of evaluation
    order or thread placement.
    """
    bits = np.random.Philox(key=np.array([master_seed, realization_index], dtype=np.uint64))
    return np.random.Generator(bits).random(n_edges)


@dataclass
class BondConfiguration:
    """One sampled colouring of the patch edges (True = open)."""

    graph: EmbeddedGraph
    open_mask: np.ndarray
    p: float
    master_seed: int
    realization_index: int

    @property
    def n_open(self) -> int:
        return int(self.open_mask.sum())

    def colours(self) -> np.ndarray:
        """Edge colours as ints, 1 = open, 0 = closed."""
        return self.open_mask.astype(np.int64)


def sample(
    g: EmbeddedGraph, params: PercolationParams, realization_index: int = 0
) -> BondConfiguration:
    u = edge_uniforms(g.n_edges, params.master_seed, realization_index)
    return BondConfiguration(
        graph=g,
        open_mask=u < params.p,
        p=params.p,
        master_seed=params.master_seed,
        realization_index=realization_index,
    )


@dataclass
class ClusterDecomposition:
    """Connected components of the open subgraph.

    ``labels`` maps each vertex to its cluster id; ``sizes`` counts vertices
    per cluster; ``boundary_touching`` flags clusters owning a vertex within
    l_max of the patch boundary (the finite-patch proxy for "possibly cut
    off").  The explicit per-cluster vertex lists are materialized lazily.
    """

    graph: EmbeddedGraph
    labels: np.ndarray
    n_clusters: int
    sizes: np.ndarray
    boundary_touching: np.ndarray

    @cached_property
    def clusters(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.n_clusters + 1))
        return [order[bounds[k] : bounds[k + 1]] for k in range(self.n_clusters)]

    def cluster_of(self, v: int) -> np.ndarray:
        return self.clusters[int(self.labels[v])]


def decompose(g: EmbeddedGraph, omega: BondConfiguration | np.ndarray) -> ClusterDecomposition:
    """Cluster decomposition of the open subgraph (isolated vertices are
    size-1 clusters)."""
    open_mask = omega.open_mask if isinstance(omega, BondConfiguration) else np.asarray(omega, dtype=bool)
    if open_mask.shape != (g.n_edges,):
        raise ValueError("bond configuration does not match the edge count")
    n = g.n_vertices
    e = g.edges[open_mask]
    if e.shape[0]:
        m = coo_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(n, n))
        n_clusters, labels = connected_components(m, directed=False)
    else:
        n_clusters, labels = n, np.arange(n, dtype=np.int64)
    labels = labels.astype(np.int64)
    sizes = np.bincount(labels, minlength=n_clusters)
    if g.box is not None and n:
        near_boundary = g.box.boundary_distance(g.embed) < g.l_max
        touching = np.zeros(n_clusters, dtype=bool)
        np.maximum.at(touching, labels, near_boundary)
    else:
        touching = np.zeros(n_clusters, dtype=bool)
    return ClusterDecomposition(
        graph=g,
        labels=labels,
        n_clusters=n_clusters,
        sizes=sizes,
        boundary_touching=touching,
    )


# ---------------------------------------------------------------------------
# interior statistics


@dataclass
class TailEstimate:
    """Monte Carlo estimates of a decay statistic over a ladder of scales."""

    stat: str
    n_values: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    realizations: int
    interior_vertices: int
    p: float
    master_seed: int
    warnings: list[str] = field(default_factory=list)


def _interior_indices(g: EmbeddedGraph, margin: float) -> np.ndarray:
    if g.box is None:
        raise ValueError("patch has no box; interior margin undefined")
    return np.flatnonzero(g.box.boundary_distance(g.embed) > margin)


def _per_realization_mean(
    g: EmbeddedGraph,
    params: PercolationParams,
    per_vertex: Callable[[ClusterDecomposition], np.ndarray],
) -> np.ndarray:
    """Stack the per-realization means of a per-vertex statistic."""
    rows = []
    for r in range(params.realizations):
        dec = decompose(g, sample(g, params, r))
        rows.append(per_vertex(dec))
    return np.array(rows)


def cluster_size_tail(
    g: EmbeddedGraph,
    params: PercolationParams,
    n_values: Sequence[int],
    margin: float | None = None,
) -> TailEstimate:
    """P(|C_v| >= n) for each n, averaged over interior vertices.

    Interior means farther than max(n) * l_max from the patch boundary, so
    the first n vertices of any counted cluster are certainly inside the
    patch and the indicator is exact.
    """
    n_values = np.asarray(sorted(int(n) for n in n_values))
    if n_values.size == 0 or n_values[0] < 1:
        raise ValueError("cluster sizes must be positive integers")
    if margin is None:
        margin = float(n_values.max()) * g.l_max
    interior = _interior_indices(g, margin)
    if interior.size == 0:
        raise ValueError("no interior vertices at this margin; enlarge the patch")

    def stat(dec: ClusterDecomposition) -> np.ndarray:
        sz = dec.sizes[dec.labels[interior]]
        return np.array([(sz >= n).mean() for n in n_values])

    rows = _per_realization_mean(g, params, stat)
    return TailEstimate(
        stat="cluster_size_tail",
        n_values=n_values.astype(float),
        estimates=rows.mean(axis=0),
        stderrs=_sem(rows),
        realizations=params.realizations,
        interior_vertices=int(interior.size),
        p=params.p,
        master_seed=params.master_seed,
    )


def boundary_path_probability(
    g: EmbeddedGraph,
    params: PercolationParams,
    n_values: Sequence[float],
    margin: float | None = None,
) -> TailEstimate:
    """P(an open path leaves the ball B_n(v)) for each n, over interior v.

    The event is decided by the maximal Euclidean displacement within the
    cluster of v: the cluster exits B_n(v) iff it owns a vertex at distance
    >= n from v.
    """
    n_values = np.asarray(sorted(float(n) for n in n_values))
    if n_values.size == 0 or n_values[0] <= 0:
        raise ValueError("ball radii must be positive")
    warnings: list[str] = []
    if margin is None:
        margin = float(n_values.max()) * max(g.l_max, 1.0)
    interior = _interior_indices(g, margin)
    if interior.size == 0:
        raise ValueError("no interior vertices at this margin; enlarge the patch")
    usable = _patch_reach(g)
    if n_values.max() > usable:
        warnings.append(
            f"ball radius {n_values.max():g} exceeds the patch reach {usable:g}; "
            "estimates beyond it are truncated to zero"
        )

    emb = g.embed

    def stat(dec: ClusterDecomposition) -> np.ndarray:
        # max displacement from each interior vertex to its cluster
        reach = np.zeros(interior.size)
        labels_int = dec.labels[interior]
        order = np.argsort(labels_int, kind="stable")
        sorted_labels = labels_int[order]
        starts = np.flatnonzero(
            np.r_[True, sorted_labels[1:] != sorted_labels[:-1]]
        )
        starts = np.r_[starts, sorted_labels.size]
        for k in range(starts.size - 1):
            block = order[starts[k] : starts[k + 1]]
            label = sorted_labels[starts[k]]
            members = dec.clusters[label]
            pts = emb[members]
            centers = emb[interior[block]]
            diff = centers[:, None, :] - pts[None, :, :]
            d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2
            reach[block] = np.sqrt(d2.max(axis=1))
        return np.array([(reach >= n).mean() for n in n_values])

    rows = _per_realization_mean(g, params, stat)
    return TailEstimate(
        stat="boundary_path",
        n_values=n_values,
        estimates=rows.mean(axis=0),
        stderrs=_sem(rows),
        realizations=params.realizations,
        interior_vertices=int(interior.size),
        p=params.p,
        master_seed=params.master_seed,
        warnings=warnings,
    )


def mean_cluster_size(
    g: EmbeddedGraph,
    params: PercolationParams,
    margin: float | None = None,
) -> tuple[float, float]:
    """chi_hat: average |C_v| over interior vertices and realizations,
    together with its standard error."""
    if margin is None:
        margin = 30.0 * max(g.l_max, 1.0)
    interior = _interior_indices(g, margin)
    if interior.size == 0:
        raise ValueError("no interior vertices at this margin; enlarge the patch")

    def stat(dec: ClusterDecomposition) -> np.ndarray:
        return np.array([dec.sizes[dec.labels[interior]].mean()])

    rows = _per_realization_mean(g, params, stat)
    return float(rows.mean()), float(_sem(rows)[0])


def _patch_reach(g: EmbeddedGraph) -> float:
    if g.box is None:
        return math.inf
    from .graphs import Ball

    if isinstance(g.box, Ball):
        return 2.0 * g.box.radius
    return math.hypot(g.box.xmax - g.box.xmin, g.box.ymax - g.box.ymin)


def _sem(rows: np.ndarray) -> np.ndarray:
    """Standard error of the mean over realization rows."""
    r = rows.shape[0]
    if r < 2:
        return np.zeros(rows.shape[1])
    return rows.std(axis=0, ddof=1) / math.sqrt(r)


# ---------------------------------------------------------------------------
# rigorous-constant report


def gamma_rate(p: float, d_max: int) -> float:
    """Chain-prescription cost rate gamma(p) = -ln p - d_max ln(1 - p).

    The probability that a given self-avoiding chain of l edges is open and
    isolated is at least e^{-gamma l}.
    """
    if not (0.0 < p < 1.0):
        raise ValueError("gamma is defined for 0 < p < 1")
    if d_max < 2:
        raise ValueError("d_max must be at least 2")
    return -math.log(p) - d_max * math.log(1.0 - p)


def psi_rate(p: float, d_max: int, l_max: float = 1.0) -> float:
    """Spatial decay rate of the boundary-path probability; positive iff
    p (d_max - 1) < 1."""
    if not (0.0 < p <= 1.0):
        raise ValueError("psi is defined for 0 < p <= 1")
    if d_max < 2:
        raise ValueError("d_max must be at least 2")
    if l_max <= 0:
        raise ValueError("l_max must be positive")
    return math.log(1.0 / (p * (d_max - 1))) / l_max


def boundary_path_bound(n: float, p: float, d_max: int, l_max: float = 1.0) -> float:
    """Rigorous bound 2 e^{-n psi(p)} on the probability that an open path
    leaves the ball of radius n around a vertex."""
    if n < 0:
        raise ValueError("radius must be nonnegative")
    return 2.0 * math.exp(-n * psi_rate(p, d_max, l_max))


@dataclass
class BoundsReport:
    """Decay constants implied by the patch geometry and bond probability.

    ``p_c_lower`` and ``psi_decay`` are rigorous consequences of d_max and
    l_max; ``gamma`` controls the low-energy tail bounds; ``lambda_decay``
    is computed from the measured mean cluster size and is labelled
    empirical because no rigorous finite chi bound accompanies it.
    """

    p: float
    d_max: int
    l_max: float
    p_c_lower: float
    psi_decay: float
    gamma: float
    chi_hat: float | None
    chi_stderr: float | None
    lambda_decay: float | None
    lambda_source: str
    holds_subcritical: bool

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "d_max": self.d_max,
            "l_max": self.l_max,
            "p_c_lower": self.p_c_lower,
            "psi_decay": self.psi_decay,
            "gamma": self.gamma,
            "chi_hat": self.chi_hat,
            "chi_stderr": self.chi_stderr,
            "lambda_decay": self.lambda_decay,
            "lambda_source": self.lambda_source,
            "holds_subcritical": self.holds_subcritical,
        }


def bounds_report(
    p: float,
    d_max: int,
    l_max: float,
    chi_hat: float | None = None,
    chi_stderr: float | None = None,
) -> BoundsReport:
    """Evaluate the decay constants at bond probability p.

    p_c_lower = 1 / (d_max - 1): below this, open paths die off exponentially.
    psi = ln(1 / (p (d_max - 1))) / l_max: spatial decay rate of the
    probability that an open path leaves a ball, positive iff subcritical.
    gamma = -ln p - d_max ln(1 - p): cost rate of prescribing a chain.
    lambda = 1 / (2 chi^2): cluster-size decay rate from the measured chi.
    """
    if d_max < 2:
        raise ValueError("d_max must be at least 2")
    if not (0.0 < p < 1.0):
        raise ValueError("bounds need 0 < p < 1")
    p_c_lower = 1.0 / (d_max - 1)
    subcritical = p * (d_max - 1) < 1.0
    psi = psi_rate(p, d_max, l_max) if l_max > 0 else math.inf
    gamma = gamma_rate(p, d_max)
    lam = None
    if chi_hat is not None:
        if chi_hat < 1.0:
            raise ValueError("mean cluster size cannot be below 1")
        lam = 1.0 / (2.0 * chi_hat * chi_hat)
    return BoundsReport(
        p=p,
        d_max=d_max,
        l_max=l_max,
        p_c_lower=p_c_lower,
        psi_decay=psi,
        gamma=gamma,
        chi_hat=chi_hat,
        chi_stderr=chi_stderr,
        lambda_decay=lam,
        lambda_source="empirical mean cluster size" if lam is not None else "unavailable",
        holds_subcritical=subcritical,
    )


# ---------------------------------------------------------------------------
# exact enumeration oracle


def bruteforce_cluster_oracle(
    g: EmbeddedGraph,
    p: float,
    vertex: int,
    n_values: Sequence[int] = (),
    max_edges: int = 20,
) -> dict:
    """Exact expectations by enumerating all 2^m bond configurations.

    Returns P(|C_v| >= n) for each requested n, E|C_v|, and the expected
    number of clusters, each as an exact weighted sum with weights
    p^(#open) (1-p)^(#closed).  Only feasible for small patches.
    """
    m = g.n_edges
    if m > max_edges:
        raise ValueError(f"{m} edges exceeds the enumeration cap {max_edges}")
    n_values = [int(n) for n in n_values]
    tail = {n: 0.0 for n in n_values}
    mean_size = 0.0
    mean_clusters = 0.0
    for bits in product((False, True), repeat=m):
        mask = np.array(bits, dtype=bool)
        k = int(mask.sum())
        w = (p**k) * ((1.0 - p) ** (m - k))
        dec = decompose(g, mask)
        size_v = int(dec.sizes[dec.labels[vertex]])
        for n in n_values:
            if size_v >= n:
                tail[n] += w
        mean_size += w * size_v
        mean_clusters += w * dec.n_clusters
    return {
        "tail": tail,
        "mean_cluster_size": mean_size,
        "expected_cluster_count": mean_clusters,
    }
