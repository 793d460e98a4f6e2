"""Time every hot kernel in each available backend.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, backend) with the best wall time and the
speedup of the compiled backend over the numpy fallback.
"""
import argparse
import timeit

import numpy as np

from wearauth.kernels import available_backends


def cases(rng):
    frame = rng.standard_normal(2048)
    A, B = rng.standard_normal((300, 40)), rng.standard_normal((200, 40))
    X = rng.standard_normal((400, 20))
    y = (X[:, 0] + 0.5 * rng.standard_normal(400) > 0).astype(np.int64)
    idx = np.arange(400, dtype=np.int64)
    feats = np.arange(20, dtype=np.int64)
    Xs = rng.standard_normal((200, 10))
    ys = np.where(Xs[:, 0] + 0.3 * rng.standard_normal(200) > 0, 1.0, -1.0)
    K = np.exp(-0.1 * ((Xs[:, None, :] - Xs[None, :, :]) ** 2).sum(-1))
    return {
        "fft_radix2 (n=2048)": lambda m: m.fft_radix2(frame),
        "minkowski_cdist p=2 (300x200x40)": lambda m: m.minkowski_cdist(A, B, 2.0),
        "minkowski_cdist p=3 (300x200x40)": lambda m: m.minkowski_cdist(A, B, 3.0),
        "best_gini_split (400x20)": lambda m: m.best_gini_split(X, y, idx, feats, 20),
        "smo_solve rbf (n=200)": lambda m: m.smo_solve(K, ys, 1.0, 1e-3, 100_000),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    rng = np.random.default_rng(0)
    print("backends: %s" % ", ".join(backends))
    for name, fn in cases(rng).items():
        times = {}
        for bname, mod in backends.items():
            number = 1
            while timeit.timeit(lambda: fn(mod), number=number) < 0.05 and number < 10_000:
                number *= 4
            times[bname] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
        line = "  ".join("%s %9.3f ms" % (b, 1e3 * t) for b, t in times.items())
        if "cython" in times:
            line += "  speedup x%.1f" % (times["python"] / times["cython"])
        print("%-34s %s" % (name, line))


if __name__ == "__main__":
    main()
