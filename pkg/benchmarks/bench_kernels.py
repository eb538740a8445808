"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py --repeat 5 --scale 1.0

Each kernel is called once untimed first so numba compile time is excluded,
then the best of ``--repeat`` runs is reported. Outputs of both backends are
checked for equality before timing.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from honeycluster import kernels


def make_cases(scale: float, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    n_series = max(4, int(60 * scale))
    series = rng.poisson(2.0, (n_series, 72)).astype(float)

    n_pts = max(8, int(400 * scale))
    pts = rng.random((n_pts, 4))
    d = np.round(np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)), 12)
    core = np.sort(d, axis=1)[:, 4]

    n_seq = max(4, int(300 * scale))
    codes = (rng.random((n_seq, 12, 12)) < 0.2).astype(np.uint8)
    lengths = rng.integers(1, 13, n_seq)
    for i, n in enumerate(lengths):
        codes[i, n:] = 0

    n_nodes = max(4, int(150 * scale))
    adj = np.triu((rng.random((n_nodes, n_nodes)) < 0.05).astype(np.int64), 1)
    adj = adj + adj.T
    return {
        "dtw_pairwise": (series, 6),
        "optics_graph": (d, core),
        "padded_hamming": (codes, lengths, 12),
        "cnm_labels": (adj, adj.sum(axis=1)),
    }


def best_of(func, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-12)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--scale", type=float, default=1.0, help="problem size multiplier")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = parser.parse_args(argv)

    if kernels.numba_impl is None:
        parser.error("numba is not importable; nothing to compare")

    rows = []
    for name, case in make_cases(args.scale, args.seed).items():
        fast = getattr(kernels.numba_impl, name)
        slow = getattr(kernels.numpy_impl, name)
        if not same(fast(*case), slow(*case)):  # also warms the jit
            raise SystemExit(f"{name}: backends disagree")
        t_nb = best_of(fast, case, args.repeat)
        t_np = best_of(slow, case, args.repeat)
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb if t_nb else float("inf")})

    if args.json:
        print(json.dumps(rows, indent=1))
    else:
        print(f"{'kernel':<16}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
        for r in rows:
            print(f"{r['kernel']:<16}{r['numba_s']:>12.5f}{r['numpy_s']:>12.5f}{r['speedup']:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
