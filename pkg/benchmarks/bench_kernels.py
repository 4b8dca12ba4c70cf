"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--rows N] [--channels D]

Workloads mirror real use: full-batch loss and gradient, one Adam epoch
(batch 512) and one sampling window of the OU recursion.
"""

import argparse
import timeit

import numpy as np

from oupm._backend import compiled_kernels, python_kernels


def workloads(rows: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    theta = np.concatenate([rng.normal(0, 0.5, d), [0.3], rng.normal(0, 0.2, d), [-0.5, 0.5]])
    U = rng.normal(size=(rows, d))
    yp, yn = rng.normal(size=rows), rng.normal(size=rows)
    dt = np.full(rows, 0.1)
    perm = rng.permutation(rows)
    W, M = 400, 10_000
    eta = rng.standard_normal((W, M))
    mu, sd = rng.normal(size=W), rng.uniform(0.1, 1.0, W)
    x0 = rng.normal(size=M)

    def loss_grad(k):
        return lambda: k.nll_loss_grad(theta, U, yp, yn, dt, 1e-12)

    def adam(k):
        def run():
            th, m1, m2 = theta.copy(), np.zeros_like(theta), np.zeros_like(theta)
            k.adam_epoch(th, m1, m2, 0, U, yp, yn, dt, perm, 512, 1e-3, 0.9, 0.999, 1e-8, 1e-12)
        return run

    def recursion(k):
        out = np.empty((W, M))
        return lambda: k.ou_recursion(x0.copy(), 0.98, 0.02, mu, sd, eta, out)

    return [(f"loss + gradient ({rows} x {d})", loss_grad),
            (f"adam epoch ({rows} x {d}, batch 512)", adam),
            (f"ou recursion ({W} steps x {M} paths)", recursion)]


def best_of(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.2 and number < 1000:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--rows", type=int, default=85_000)
    parser.add_argument("--channels", type=int, default=16)
    args = parser.parse_args(argv)
    if compiled_kernels is None:
        print("compiled extension not available; only the numpy fallback can be timed")
    print(f"{'workload':<42}{'numpy ms':>12}{'compiled ms':>14}{'speed-up':>10}")
    for name, make in workloads(args.rows, args.channels):
        t_py = best_of(make(python_kernels), args.repeat)
        if compiled_kernels is None:
            print(f"{name:<42}{1e3 * t_py:>12.3f}{'-':>14}{'-':>10}")
            continue
        t_c = best_of(make(compiled_kernels), args.repeat)
        print(f"{name:<42}{1e3 * t_py:>12.3f}{1e3 * t_c:>14.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
