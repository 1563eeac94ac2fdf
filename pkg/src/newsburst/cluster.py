"""Similarity matrix, threshold graph, maximal cliques and overlap resolution.

Articles are grouped only when *every* pair in the group is more similar than
the threshold: a group is a clique of the threshold graph, never a chain of
neighbours.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels
from .score import ClusterScore

DEFAULT_THRESHOLD = 0.92
DEFAULT_MAX_NODES = 2000


class CliqueLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    ids: tuple
    s: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass(frozen=True, eq=False)
class ThresholdGraph:
    n: int
    adj: np.ndarray  # uint64[n, words] bitsets
    ids: tuple = ()

    @classmethod
    def from_edges(cls, n: int, edges, ids=()) -> "ThresholdGraph":
        adj = np.zeros((n, kernels.n_words(n)), dtype=np.uint64)
        for i, j in edges:
            if i == j:
                continue
            adj[i, j >> 6] |= np.uint64(1) << np.uint64(j & 63)
            adj[j, i >> 6] |= np.uint64(1) << np.uint64(i & 63)
        return cls(n, adj, tuple(ids) or tuple(range(n)))

    def has_edge(self, i: int, j: int) -> bool:
        return bool((int(self.adj[i, j >> 6]) >> (j & 63)) & 1)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in combinations(range(self.n), 2) if self.has_edge(i, j)]


@dataclass(frozen=True)
class Cluster:
    members: frozenset
    score: ClusterScore | None = field(default=None, compare=False)


def similarity_matrix(vectors) -> SimilarityMatrix:
    """Cosine similarities of unit article vectors, ``V @ V.T``."""
    if len(vectors) == 0:
        return SimilarityMatrix((), np.zeros((0, 0)))
    mat = np.vstack([av.v for av in vectors])
    return SimilarityMatrix(tuple(av.article_id for av in vectors), kernels.similarity_matrix(mat))


def build_threshold_graph(m: SimilarityMatrix, tau: float = DEFAULT_THRESHOLD) -> ThresholdGraph:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    if m.n == 0:
        return ThresholdGraph(0, np.zeros((0, 1), dtype=np.uint64), ())
    return ThresholdGraph(m.n, kernels.adjacency_words(m.s, tau), m.ids)


def canonical_order(cliques):
    """Largest first, then lexicographic on sorted members."""
    return sorted((tuple(sorted(c)) for c in cliques), key=lambda c: (-len(c), c))


def enumerate_cliques(g: ThresholdGraph, max_nodes: int = DEFAULT_MAX_NODES) -> list[tuple[int, ...]]:
    """Every maximal clique as a sorted tuple of node indices, canonically ordered.

    Isolated nodes come out as singletons.
    """
    if g.n > max_nodes:
        raise CliqueLimitExceeded(f"{g.n} nodes exceeds the clique enumeration cap of {max_nodes}")
    return canonical_order(kernels.maximal_cliques(g.adj))


def dedup_clusters(
    cliques: Sequence,
    ratings: Mapping | Callable[[tuple], ClusterScore],
) -> list[Cluster]:
    """Greedy overlap resolution: best-rated clique first, any clique sharing
    a member with an already accepted one is dropped whole."""
    if callable(ratings):
        rate = ratings
    else:
        rate = {tuple(sorted(k)): v for k, v in ratings.items()}.__getitem__
    scored = []
    for c in canonical_order(cliques):
        scored.append((rate(c), c))
    scored.sort(key=lambda sc: (sc[0].rank_key(), -len(sc[1]), sc[1]))

    taken: set = set()
    accepted = []
    for score, members in scored:
        if taken.isdisjoint(members):
            taken.update(members)
            accepted.append(Cluster(frozenset(members), score))
    return accepted


def cluster_articles(
    vectors,
    rate: Callable[[tuple], ClusterScore],
    tau: float = DEFAULT_THRESHOLD,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> tuple[SimilarityMatrix, list[tuple], list[Cluster]]:
    """Whole clustering stage for one window.

    Vectors are ordered by article id first so the result does not depend on
    input order. Returns the matrix, the cliques (as article ids) and the
    accepted clusters.
    """
    ordered = sorted(vectors, key=lambda av: av.article_id)
    m = similarity_matrix(ordered)
    g = build_threshold_graph(m, tau)
    cliques = [tuple(m.ids[i] for i in c) for c in enumerate_cliques(g, max_nodes)]
    return m, cliques, dedup_clusters(cliques, rate)
