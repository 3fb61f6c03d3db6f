"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once to warm the JIT, then ``--repeat`` times per backend;
the best wall time is reported. Outputs are compared before timing.
"""
import argparse
import time

import numpy as np

from robustcover.covers import pairwise_distances
from robustcover.kernels import numpy_backend
from robustcover.network import random_network

try:
    from robustcover.kernels import numba_backend
except ImportError:  # numba missing
    numba_backend = None


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    gen = np.random.default_rng(0)
    net = random_network([2, 32, 32, 3], 0)
    X = gen.uniform(-1, 1, (40401, 2))       # one 201 x 201 grid
    y = gen.integers(0, 3, len(X))
    packed = net.packed
    yield "mlp_logits 40k x [2,32,32,3]", lambda b: b.mlp_logits(*packed, X)
    yield "mlp_margins 40k x [2,32,32,3]", lambda b: b.mlp_margins(*packed, X, y)
    small = random_network([2, 8, 8, 3], 1).packed
    yield "mlp_margins 40k x [2,8,8,3]", lambda b: b.mlp_margins(*small, X, y)
    Xs, ys = X[:64], y[:64]
    yield "mlp_margins 64 x [2,8,8,3]", lambda b: b.mlp_margins(*small, Xs, ys)

    W = gen.standard_normal((16, 16))
    D = gen.standard_normal((16, 64))
    U = W @ D
    G, K = np.ascontiguousarray(U @ D.T), np.ascontiguousarray(D @ D.T)
    yield "greedy_maurey 16x16, k=4000", lambda b: b.greedy_maurey(G.copy(), K, 1.0 / 4000, 4000)

    P = gen.uniform(size=(1500, 2))
    adj = pairwise_distances(P) <= 0.05
    yield "greedy_set_cover 1500 pts", lambda b: b.greedy_set_cover(adj)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, run in cases():
        ref = run(numpy_backend)
        t_np = best_time(lambda: run(numpy_backend), args.repeat)
        if numba_backend is None:
            print(f"{name:34s} {1e3 * t_np:11.2f} {'n/a':>11s}")
            continue
        out = run(numba_backend)
        for a, b in zip(ref if isinstance(ref, tuple) else (ref,), out if isinstance(out, tuple) else (out,)):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
        t_nb = best_time(lambda: run(numba_backend), args.repeat)
        print(f"{name:34s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
