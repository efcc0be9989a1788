"""Compiled vs numpy kernels: per-kernel timings plus two end-to-end workloads.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5] [--json out.json]
"""
import argparse
import json
import time

import numpy as np

from geoflow import kernels
from geoflow.density import log_prob_batch
from geoflow.fieldnet import FieldNet
from geoflow.flowmatch import rfm_sample_batch
from geoflow.sphere import uniform_batch


def best_of(fn, repeat):
    fn()
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def kernel_cases(n, rng):
    x = uniform_batch(rng, n)
    y = uniform_batch(rng, n)
    v = 0.3 * (y - np.sum(x * y, axis=1, keepdims=True) * x)
    z = rng.standard_normal((max(1, n // 128), 128)) * 2.0
    pts = uniform_batch(rng, 600)
    return {
        "exp_map": lambda k: k.exp_map(x, v),
        "log_map": lambda k: k.log_map(x, y),
        "arc": lambda k: k.arc(x, y),
        "pairwise_arc(600)": lambda k: k.pairwise_arc(pts),
        "gelu": lambda k: k.gelu(z),
        "gelu_and_grad": lambda k: k.gelu_and_grad(z),
    }


def workloads(rng):
    net = FieldNet(8, hidden=(128, 128), time_dim=16, seed=0)
    for p in net.params():
        p[...] = 0.1 * rng.standard_normal(p.shape)
    c = np.eye(8)[0]
    x = uniform_batch(rng, 2000)
    return {
        "rfm_sample 2000x50": lambda: rfm_sample_batch(net, c, 50, x1=x),
        "log_prob 2000x5": lambda: log_prob_batch(net, x, c, 5),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only numpy timings are shown")
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in kernel_cases(args.n, rng).items():
        t = {b: best_of(lambda: fn(m), args.repeat) for b, m in backends.items()}
        rows.append((name, t))
    for name, fn in workloads(rng).items():
        t = {}
        for b in backends:
            with kernels.backend(b):
                t[b] = best_of(fn, max(1, args.repeat // 2))
        rows.append((name, t))

    print(f"{'kernel':<22}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, t in rows:
        py = t["python"] * 1e3
        cy = t.get("cython")
        if cy is None:
            print(f"{name:<22}{py:>12.2f}{'-':>12}{'-':>10}")
        else:
            print(f"{name:<22}{py:>12.2f}{cy * 1e3:>12.2f}{t['python'] / cy:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({name: t for name, t in rows}, fh, indent=2)


if __name__ == "__main__":
    main()
