"""Time the numba kernels against the pure Python/numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 200 1000 2000]

Inputs are clustered unit vectors (a burst-like window), thresholded at 0.92.
Both paths must agree on the output; the script exits non-zero if they do not.
"""
import argparse
import sys
import time

import numpy as np

from newsburst import kernels


def window(n: int, dim: int, rng) -> np.ndarray:
    # a few tight topics among mostly unrelated articles
    centres = rng.normal(size=(max(1, n // 20), dim))
    rows = rng.normal(size=(n, dim))
    topical = rng.random(n) < 0.3
    picks = centres[rng.integers(len(centres), size=n)]
    rows[topical] = picks[topical] + rng.normal(scale=0.02, size=(topical.sum(), dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 2000])
    ap.add_argument("--dim", type=int, default=200)
    ap.add_argument("--tau", type=float, default=0.92)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    # compile outside the timed region
    warm = kernels.adjacency_words_numba(np.eye(3), args.tau)
    kernels.maximal_cliques_numba(warm)

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'kernel':<10} {'numba ms':>10} {'python ms':>10} {'speedup':>8}  cliques")
    ok = True
    for n in args.sizes:
        sim = kernels.similarity_matrix(window(n, args.dim, rng))
        a_nb = kernels.adjacency_words_numba(sim, args.tau)
        a_np = kernels.adjacency_words_numpy(sim, args.tau)
        ok &= np.array_equal(a_nb, a_np)
        t_nb = best_of(lambda: kernels.adjacency_words_numba(sim, args.tau), args.repeat)
        t_np = best_of(lambda: kernels.adjacency_words_numpy(sim, args.tau), args.repeat)
        print(f"{n:>6} {'threshold':<10} {t_nb * 1e3:>10.2f} {t_np * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")

        members, offsets = kernels.maximal_cliques_numba(a_nb)
        from_nb = [tuple(members[s:e].tolist()) for s, e in zip(offsets[:-1], offsets[1:])]
        ok &= from_nb == kernels.maximal_cliques_python(a_nb)
        t_nb = best_of(lambda: kernels.maximal_cliques_numba(a_nb), args.repeat)
        t_py = best_of(lambda: kernels.maximal_cliques_python(a_nb), args.repeat)
        print(f"{n:>6} {'cliques':<10} {t_nb * 1e3:>10.2f} {t_py * 1e3:>10.2f} {t_py / t_nb:>7.1f}x  {len(from_nb)}")

    if not ok:
        print("MISMATCH between numba and fallback outputs", file=sys.stderr)
        return 1
    print("outputs identical on both paths")
    return 0


if __name__ == "__main__":
    sys.exit(main())
