"""Time the compiled and pure-Python kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import sys
import timeit

import numpy as np

from sdnguard import kernels


def segment_inputs(rng, n_flows=2000, per_flow=50):
    sizes = rng.integers(1, 2 * per_flow, size=n_flows)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    ts = np.concatenate([np.sort(rng.uniform(0, 60, size=k)) for k in sizes])
    payload = rng.integers(0, 1500, size=len(ts)).astype(np.float64)
    return (ts, payload, offsets)


def split_inputs(rng, n=20000, classes=4):
    x = np.sort(rng.normal(size=n))
    y = rng.integers(0, classes, size=n).astype(np.int64)
    return (x, y, classes)


def scan_inputs(rng, K=8, I=50, L=100):
    obs = rng.integers(0, 1000, size=(I, 3)).astype(np.int64)
    net = rng.integers(0, 1000, size=(L, 3)).astype(np.int64)
    src = np.array([2000, 2000, 2000], dtype=np.int64)
    dst = np.array([3000, 3000, 3000], dtype=np.int64)
    return (src, dst, obs, net, K)


CASES = {
    "segment_stats": ("segment_stats", segment_inputs),
    "best_split": ("best_split", split_inputs),
    "nested_scan": ("nested_scan", scan_inputs),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, (fn, make) in CASES.items():
        inputs = make(rng)
        best = {}
        for b in backends:
            prev = kernels.use_backend(b)
            try:
                func = getattr(kernels, fn)
                number = 1 if b == "python" else 10
                best[b] = min(timeit.repeat(lambda: func(*inputs), number=number, repeat=args.repeat)) / number
            finally:
                kernels.use_backend(prev)
        line = f"{name:<14}" + "".join(f"{best[b] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{best['python'] / best['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
