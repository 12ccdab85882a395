"""Compiled kernel against the pure-Python twin.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.  Times a long
geodesic trace with Jacobi data and a batch of short flows on each spec,
and checks that both backends return the same numbers.
"""

import argparse
import timeit

import numpy as np

from cartan_ray import _pykernels
from cartan_ray.manifold import make_spec

try:
    from cartan_ray import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases():
    rng = np.random.default_rng(0)
    for name in ("euclidean", "hyperbolic", "polydecay", "gaussian_well"):
        spec = make_spec(name)
        y0 = np.array([0.7, -0.2, np.cos(0.4), np.sin(0.4), 1.0, 0.0, 0.0, 1.0])
        states = np.column_stack([rng.uniform(-2, 2, (256, 2)),
                                  np.cos(b := rng.uniform(0, 6.3, 256)), np.sin(b)])
        yield name, spec, y0, np.ascontiguousarray(states)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernel not available; build with `pip install --no-build-isolation -e .`")
        return 1
    print(f"{'spec':<14}{'task':<12}{'cython ms':>11}{'python ms':>11}{'speedup':>9}{'rel diff':>11}")
    for name, spec, y0, states in _cases():
        kid, par = spec.kernel_id, spec.kernel_params
        tasks = {
            # step grids drift apart by roundoff; compare the shared endpoint
            "trace": lambda k: np.asarray(k.trace(kid, par, y0, 20.0, 1e-10, 1e-12, 0.0)[1])[-1],
            "short_flow": lambda k: k.short_flow(kid, par, states, 0.05, 4),
        }
        for task, fn in tasks.items():
            a, b = np.asarray(fn(_kernels)), np.asarray(fn(_pykernels))
            diff = float(np.max(np.abs(a - b) / (1.0 + np.abs(a))))
            tc = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
            tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
            print(f"{name:<14}{task:<12}{1e3 * tc:>11.2f}{1e3 * tp:>11.2f}{tp / tc:>9.0f}x{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
