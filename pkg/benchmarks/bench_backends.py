"""Time the numba kernels against the pure-numpy fallback.

Runs the same workloads through both kernel modules and prints one row per
kernel with the per-call time and the speedup. The numba timings exclude
the one-off JIT compilation (a warm-up call runs first).

    python benchmarks/bench_backends.py [--quick]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cobra.backend import load_kernels
from cobra.bnn import build_topology, init_network


def _sim_like_inputs(rng, n_rows):
    X = rng.uniform(-1.0, 1.0, (n_rows, 4))
    u = ((X - 0.2) ** 2 / (2 * 0.8**2)).sum(axis=1)
    y = (rng.random(n_rows) >= np.exp(-0.5 * (2 * u) ** 4)).astype(np.float64)
    return X, y


def _network(rng, n_rows, n_advisors=100):
    hbar = np.concatenate([np.zeros(4), rng.uniform(0.3, 0.9, n_advisors)])
    is_context = np.arange(4 + n_advisors) < 4
    topo = build_topology(hbar, is_context)
    net = init_network(topo, seed=7)
    X = np.hstack(
        [rng.uniform(-1, 1, (n_rows, 4)), rng.uniform(0, 1, (n_rows, n_advisors))]
    )
    y = (rng.random(n_rows) < 0.5).astype(np.float64)
    return net, topo, X, y


def _time(fn, repeats):
    fn()  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args(argv)

    scale = 0.2 if args.quick else 1.0
    rng = np.random.default_rng(0)
    numba_k = load_kernels("numba")
    numpy_k = load_kernels("numpy")

    tree_rows = int(200 * max(scale, 0.5))
    Xt, yt = _sim_like_inputs(rng, tree_rows)
    tree = numba_k.tree_grow(Xt, yt, 8, 2)
    Xp = rng.uniform(-1, 1, (int(5000 * scale) + 10, 4))

    gnb_args = (
        rng.uniform(-1, 1, 4),
        rng.uniform(0.1, 1, 4),
        rng.uniform(-1, 1, 4),
        rng.uniform(0.1, 1, 4),
        np.log(0.4),
        np.log(0.6),
        Xp,
    )

    net, topo, Xb, yb = _network(rng, int(2000 * scale) + 100)
    (s1, d1), (s2, d2), (s3, d3) = topo.edge_layout()
    perm = rng.permutation(Xb.shape[0])

    def epoch_runner(kernels):
        w = [v.copy() for v in net.weights]
        b = [v.copy() for v in net.biases]
        vw = [np.zeros_like(v) for v in w]
        vb = [np.zeros_like(v) for v in b]

        def run():
            kernels.bnn_train_epoch(
                Xb, yb, perm, 32, 0.05, 0.9,
                s1, d1, w[0], b[0], vw[0], vb[0],
                s2, d2, w[1], b[1], vw[1], vb[1],
                s3, d3, w[2], b[2], vw[2], vb[2],
            )

        return run

    def forward_runner(kernels):
        def run():
            kernels.bnn_forward(
                Xb, topo.widths[1], topo.widths[2],
                s1, d1, net.weights[0], net.biases[0],
                s2, d2, net.weights[1], net.biases[1],
                s3, d3, net.weights[2], net.biases[2],
            )

        return run

    reps = max(2, int(20 * scale))
    workloads = [
        (f"tree_grow ({tree_rows} rows)", lambda k: (lambda: k.tree_grow(Xt, yt, 8, 2)), 10 * reps),
        (f"tree_predict ({len(Xp)} rows)", lambda k: (lambda: k.tree_predict(*tree, Xp)), 10 * reps),
        (f"gnb_posterior ({len(Xp)} rows)", lambda k: (lambda: k.gnb_posterior(*gnb_args)), 10 * reps),
        (f"bnn_forward ({len(Xb)}x{topo.widths[0]})", forward_runner, reps),
        (f"bnn_train_epoch ({len(Xb)} rows, {topo.edge_count} edges)", epoch_runner, reps),
    ]

    print(f"{'kernel':<45} {'numba':>12} {'numpy':>12} {'speedup':>8}")
    for name, make, repeats in workloads:
        t_nb = _time(make(numba_k), repeats)
        t_np = _time(make(numpy_k), repeats)
        print(f"{name:<45} {t_nb * 1e3:>9.3f} ms {t_np * 1e3:>9.3f} ms {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
