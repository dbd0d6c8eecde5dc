"""Compare the numba loop kernels with their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 10 20 40]

Each kernel is called once before timing so JIT compilation is excluded;
the table reports the best of ``--repeat`` runs and checks that both
backends return the same numbers.
"""
import argparse
import timeit

import numpy as np

from projtomo import _kernels as K
from projtomo.state import random_density


def cases(size):
    rng = np.random.default_rng(size)
    rho = np.ascontiguousarray(random_density(size + 1, seed=size).matrix)
    psi = rng.normal(size=size + 1) + 1j * rng.normal(size=size + 1)
    psi /= np.linalg.norm(psi)
    table = K.amplitude_table(size, 0.5, 0.5, 0.0, 0.0)
    return {
        "joint_grid": (K.joint_grid_loops, K.joint_grid_numpy, (rho, psi, table, 2 * size)),
        "loss_matrix": (K.loss_matrix_loops, K.loss_matrix_numpy, (2 * size, 0.8)),
    }


def best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40])
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':<16}{'cutoff':>7}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}{'max diff':>11}")
    for size in args.sizes:
        for name, (loops, vec, call_args) in cases(size).items():
            diff = float(np.abs(loops(*call_args) - vec(*call_args)).max())  # also warms up the JIT
            t_nb = best(loops, call_args, args.repeat)
            t_np = best(vec, call_args, args.repeat)
            print(f"{name:<16}{size:>7}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
