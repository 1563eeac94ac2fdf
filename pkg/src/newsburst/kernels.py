"""Hot loops of the clustering stage.

Two interchangeable implementations live here:

* a numba path working on ``uint64[n, words]`` adjacency bitsets, and
* a pure Python/numpy path working on packed bits and Python ``int`` bitsets.

:func:`maximal_cliques` dispatches on :data:`newsburst._jit.JIT_ENABLED`.
:func:`adjacency_words` always takes the numpy path: a vectorised compare plus
``packbits`` beats the compiled loop (see ``benchmarks/bench_kernels.py``),
and the numba version is kept for parity tests. Both clique paths enumerate
the same cliques (Tomita pivoting, candidates taken in ascending vertex order),
so results are identical before any canonical sorting.
"""
from __future__ import annotations

import numpy as np

from ._jit import JIT_ENABLED, njit

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)


def n_words(n: int) -> int:
    return max(1, (n + 63) // 64)


# ---------------------------------------------------------------- similarity


def similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    """Gram matrix of row vectors, made exactly symmetric."""
    v = np.ascontiguousarray(vectors, dtype=np.float64)
    s = v @ v.T
    upper = np.triu_indices(s.shape[0], 1)
    s[(upper[1], upper[0])] = s[upper]
    return s


# ----------------------------------------------------------- threshold graph


def adjacency_words_numpy(sim: np.ndarray, tau: float) -> np.ndarray:
    n = sim.shape[0]
    mask = sim > tau
    np.fill_diagonal(mask, False)
    packed = np.packbits(mask, axis=1, bitorder="little")
    out = np.zeros((n, n_words(n) * 8), dtype=np.uint8)
    out[:, : packed.shape[1]] = packed
    return out.view("<u8").astype(np.uint64, copy=False)


@njit(cache=True)
def adjacency_words_numba(sim, tau):
    n = sim.shape[0]
    w = max(1, (n + 63) // 64)
    adj = np.zeros((n, w), dtype=np.uint64)
    for i in range(n):
        for j in range(i + 1, n):
            if sim[i, j] > tau:
                adj[i, j >> 6] |= np.uint64(1) << np.uint64(j & 63)
                adj[j, i >> 6] |= np.uint64(1) << np.uint64(i & 63)
    return adj


def adjacency_words(sim: np.ndarray, tau: float) -> np.ndarray:
    """Bitset adjacency of the graph with an edge wherever ``sim[i, j] > tau``."""
    return adjacency_words_numpy(np.ascontiguousarray(sim, dtype=np.float64), tau)


# --------------------------------------------------------- maximal cliques


@njit(cache=True)
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@njit(cache=True)
def _ctz(x):
    # x must be nonzero
    return _popcount((x & (~x + np.uint64(1))) - np.uint64(1))


@njit(cache=True)
def _choose_pivot(adj, P, X, C, d):
    w = adj.shape[1]
    best = -1
    pivot = -1
    for k in range(w):
        m = P[d, k] | X[d, k]
        while m != 0:
            low = m & (~m + np.uint64(1))
            m ^= low
            u = k * 64 + np.int64(_ctz(low))
            cnt = 0
            for j in range(w):
                cnt += np.int64(_popcount(P[d, j] & adj[u, j]))
            if cnt > best:
                best = cnt
                pivot = u
    for j in range(w):
        if pivot >= 0:
            C[d, j] = P[d, j] & ~adj[pivot, j]
        else:
            C[d, j] = P[d, j]


@njit(cache=True)
def maximal_cliques_numba(adj):
    """Iterative pivoted Bron-Kerbosch over word bitsets.

    Returns ``(members, offsets)``: clique ``c`` is ``members[offsets[c]:offsets[c+1]]``.
    """
    n, w = adj.shape
    members = np.empty(max(16, n), dtype=np.int64)
    offsets = np.empty(max(16, n + 1), dtype=np.int64)
    offsets[0] = 0
    n_cliques = 0
    if n == 0:
        return members[:0], offsets[:1]
    P = np.zeros((n + 1, w), dtype=np.uint64)
    X = np.zeros((n + 1, w), dtype=np.uint64)
    C = np.zeros((n + 1, w), dtype=np.uint64)
    R = np.empty(n + 1, dtype=np.int64)
    for v in range(n):
        P[0, v >> 6] |= np.uint64(1) << np.uint64(v & 63)
    _choose_pivot(adj, P, X, C, 0)
    d = 0
    while d >= 0:
        v = -1
        for k in range(w):
            c = C[d, k]
            if c != 0:
                low = c & (~c + np.uint64(1))
                C[d, k] = c ^ low
                v = k * 64 + np.int64(_ctz(low))
                break
        if v < 0:
            d -= 1
            continue
        R[d] = v
        p_empty = True
        x_empty = True
        for j in range(w):
            np_ = P[d, j] & adj[v, j]
            nx = X[d, j] & adj[v, j]
            P[d + 1, j] = np_
            X[d + 1, j] = nx
            if np_ != 0:
                p_empty = False
            if nx != 0:
                x_empty = False
        bit = np.uint64(1) << np.uint64(v & 63)
        P[d, v >> 6] &= ~bit
        X[d, v >> 6] |= bit
        if p_empty:
            if x_empty:
                size = d + 1
                end = offsets[n_cliques]
                if end + size > members.shape[0]:
                    grown = np.empty(2 * (end + size), dtype=np.int64)
                    grown[:end] = members[:end]
                    members = grown
                if n_cliques + 2 > offsets.shape[0]:
                    grown_o = np.empty(2 * offsets.shape[0], dtype=np.int64)
                    grown_o[: n_cliques + 1] = offsets[: n_cliques + 1]
                    offsets = grown_o
                for i in range(size):
                    members[end + i] = R[i]
                n_cliques += 1
                offsets[n_cliques] = end + size
            continue
        d += 1
        _choose_pivot(adj, P, X, C, d)
    return members[: offsets[n_cliques]], offsets[: n_cliques + 1]


def _iter_bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def maximal_cliques_python(adj: np.ndarray) -> list[tuple[int, ...]]:
    """Same enumeration as the numba kernel, on Python ``int`` bitsets."""
    n = adj.shape[0]
    if n == 0:
        return []
    rows = np.ascontiguousarray(adj, dtype="<u8")
    nbrs = [int.from_bytes(rows[i].tobytes(), "little") for i in range(n)]

    def candidates(p: int, x: int) -> int:
        best, pivot = -1, -1
        for u in _iter_bits(p | x):
            cnt = (p & nbrs[u]).bit_count()
            if cnt > best:
                best, pivot = cnt, u
        return p & ~nbrs[pivot]

    out: list[tuple[int, ...]] = []
    p0 = (1 << n) - 1
    # frames: [P, X, C]; explicit stack, cliques can be deeper than the recursion limit
    stack = [[p0, 0, candidates(p0, 0)]]
    r: list[int] = []
    while stack:
        frame = stack[-1]
        c = frame[2]
        if not c:
            stack.pop()
            if r:
                r.pop()
            continue
        low = c & -c
        frame[2] = c ^ low
        v = low.bit_length() - 1
        p, x = frame[0], frame[1]
        new_p, new_x = p & nbrs[v], x & nbrs[v]
        frame[0] = p & ~low
        frame[1] = x | low
        if not new_p:
            if not new_x:
                out.append(tuple(r) + (v,))
            continue
        r.append(v)
        stack.append([new_p, new_x, candidates(new_p, new_x)])
    return out


def maximal_cliques(adj: np.ndarray) -> list[tuple[int, ...]]:
    """All maximal cliques of a bitset graph, members in insertion (search) order."""
    if JIT_ENABLED:
        members, offsets = maximal_cliques_numba(np.ascontiguousarray(adj, dtype=np.uint64))
        flat = members.tolist()
        bounds = offsets.tolist()
        return [tuple(flat[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    return maximal_cliques_python(adj)


# --------------------------------------------------------- representative


def cosine_to_mean(vectors: np.ndarray) -> np.ndarray:
    """Cosine of each row with the (unnormalised) mean row; zeros where undefined."""
    v = np.asarray(vectors, dtype=np.float64)
    mean = v.mean(axis=0)
    mean_norm = np.linalg.norm(mean)
    norms = np.linalg.norm(v, axis=1)
    denom = norms * mean_norm
    out = np.zeros(v.shape[0])
    ok = denom > 0
    out[ok] = (v[ok] @ mean) / denom[ok]
    return out
