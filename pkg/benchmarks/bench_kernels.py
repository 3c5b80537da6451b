"""Compare the compiled and pure-Python CAP kernels.

Times a single CAP area, the three multiplicity-weighted areas computed per
bootstrap replicate, and a full bootstrap null, for each available backend.

    python benchmarks/bench_kernels.py --n 65000 --B 500
"""
import argparse
import time

import numpy as np

from ginidrift import kernels
from ginidrift.drift import GroupSpec, SyntheticSpec, generate_portfolio
from ginidrift.inference import BootstrapConfig, bootstrap_null
from ginidrift.metrics import score_dataset


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=65_000)
    ap.add_argument("--B", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    spec = SyntheticSpec((GroupSpec("low", 0.5, 0.05), GroupSpec("high", 0.5, 0.15)),
                         args.n, seed=1)
    obs = score_dataset(generate_portfolio(spec))
    y, w = obs.response.astype(np.float64), np.ones(len(obs))
    order = np.argsort(-obs.score, kind="stable").astype(np.int64)
    orders = np.vstack([order, order[::-1], np.argsort(-y, kind="stable")]).astype(np.int64)
    ys, ws = y[orders], w[orders]
    counts = np.bincount(np.random.default_rng(0).integers(0, args.n, args.n),
                         minlength=args.n).astype(np.int64)

    rows, nulls = [], {}
    for name in kernels.available_backends():
        previous = kernels.use_backend(name)
        try:
            t_area = best_of(lambda: kernels.cap_area(y, w, order), args.repeat)
            t_rep = best_of(lambda: kernels.ordered_areas(ys, ws, orders, counts), args.repeat)
            t0 = time.perf_counter()
            nulls[name] = bootstrap_null(obs, BootstrapConfig(B=args.B, seed=0))
            t_boot = time.perf_counter() - t0
        finally:
            kernels.use_backend(previous)
        rows.append((name, t_area, t_rep, t_boot))

    print(f"n={args.n}  B={args.B}")
    print(f"{'backend':<10}{'cap_area ms':>14}{'replicate ms':>15}{'bootstrap s':>14}")
    for name, a, r, b in rows:
        print(f"{name:<10}{a * 1e3:>14.3f}{r * 1e3:>15.3f}{b:>14.2f}")
    if len(rows) == 2:
        print(f"speed-up (bootstrap): {rows[1][3] / rows[0][3]:.2f}x")
        a, b = nulls["compiled"], nulls["python"]
        print(f"max |replicate difference|: "
              f"{np.max(np.abs(a.replicate_values - b.replicate_values)):.1e}")


if __name__ == "__main__":
    main()
