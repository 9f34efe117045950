"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 2000]

Also times a short end-to-end search in a child process with
SYMSEARCH_NUMBA=0 versus the default, since the flag is read at import.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from symsearch import _accel
from symsearch.parse import parse_infix

SEARCH = """
import time
from symsearch.benchmarks import Registry, sample_dataset
from symsearch.selfsearch import RunConfig, run_search
spec = Registry.load()["Nguyen-1"]
ds = sample_dataset(spec, seed=0)
t = time.perf_counter()
r = run_search(ds, RunConfig(max_episodes=5, reward_threshold=1.0), vocab=spec.vocabulary())
print(time.perf_counter() - t, r.simulations)
"""


def best_of(fn, repeat):
    fn()  # warm-up (and jit compile)
    t = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba path is disabled; unset SYMSEARCH_NUMBA to compare")

    tree, consts = parse_infix("sin(x1) + sin(x1 + x1^2) * exp(x1 / 2.5)")
    ops, a, slots = tree.program()
    a = a.copy()
    a[slots] = consts
    rng = np.random.default_rng(0)
    for n in (20, 1000):
        X = rng.uniform(-1, 1, (n, 1))
        t_nb = best_of(lambda: _accel.eval_prefix(ops, a, X), args.repeat)
        t_np = best_of(lambda: _accel.eval_prefix_numpy(ops, a, X), args.repeat)
        print(f"eval_prefix  n={n:5d}  numba {t_nb * 1e6:8.2f} us  numpy {t_np * 1e6:8.2f} us"
              f"  x{t_np / t_nb:.1f}")

    k = 12
    W, N, P = rng.uniform(0, 5, k), rng.integers(0, 10, k).astype(float), rng.dirichlet(np.ones(k))
    t_nb = best_of(lambda: _accel.uct_select(W, N, P, 60.0, 1.0), args.repeat * 10)
    t_np = best_of(lambda: _accel.uct_select_numpy(W, N, P, 60.0, 1.0), args.repeat * 10)
    print(f"uct_select   k={k:5d}  numba {t_nb * 1e6:8.2f} us  numpy {t_np * 1e6:8.2f} us"
          f"  x{t_np / t_nb:.1f}")

    for flag in ("1", "0"):
        env = dict(os.environ, SYMSEARCH_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SEARCH], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        label = "numba" if flag == "1" else "numpy"
        print(f"search 5 episodes ({label}): {float(out[0]):.2f} s, {out[1]} simulations")


if __name__ == "__main__":
    main()
