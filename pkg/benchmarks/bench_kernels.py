"""Time the compiled kernels against the NumPy fallback on replica-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so no environment variable is needed.
Each kernel's outputs are also compared so a speedup never hides a mismatch.
"""

import argparse
import timeit

import numpy as np

from riskstrat import _kernels_py as py

try:
    from riskstrat import _kernels as cy
except ImportError:  # extension not built
    cy = None


def cases(rng):
    n, b, m = 512, 128, 5
    scores = rng.random(4000).round(3)  # rounding forces ties
    labels = (rng.random(4000) < 0.25).astype(np.int64)
    y = rng.random(4000)
    w = np.ones(4000)
    t_terms = rng.normal(0, 0.3, (n, m))
    b_terms = rng.normal(0, 0.3, (b, m))
    values = rng.random((n, 1 << 12))
    return {
        "rank_auc (n=4000)": lambda k: k.rank_auc(scores, labels),
        "pava (n=4000)": lambda k: k.pava(y, w),
        "coalition_values_linear (512x128, M=5)": lambda k: k.coalition_values_linear(t_terms, b_terms, -1.1),
        "shapley_from_values (512, M=12)": lambda k: k.shapley_from_values(values, 12),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<42}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:<42}{t_py:>12.2f}{'-':>12}{'-':>10}")
            continue
        a, b = np.asarray(fn(py)), np.asarray(fn(cy))
        if not np.allclose(a, b, rtol=0, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree (max diff {np.max(np.abs(a - b)):.3g})")
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<42}{t_py:>12.2f}{t_cy:>12.2f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
