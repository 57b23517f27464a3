"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N wall time per workload and backend, plus the ratio.
"""

import argparse
import timeit

import numpy as np

from ktn import kernels
from ktn.conv import ConvGeometry, col2im_batch, im2col_batch
from ktn.decomp import cp_als
from ktn.harness.data import synth_dataset
from ktn.harness.model import loss_and_grads, toy_architecture
from ktn.linalg import svd


def workloads():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(8, 64, 72)), rng.normal(size=(8, 72, 48))
    m = rng.normal(size=(48, 144))
    x = rng.normal(size=(32, 8, 16, 16))
    g = ConvGeometry.square(3, pad=1)
    cols = im2col_batch(x, g)
    k = rng.normal(size=(16, 16, 3, 3))
    model = toy_architecture(seed=0)
    data = synth_dataset(32, 4, seed=0)
    return {
        "bmm 8x(64x72 @ 72x48)": lambda: kernels.bmm(a, b),
        "svd 48x144 (Jacobi)": lambda: svd(m),
        "im2col 32x8x16x16, 3x3 pad 1": lambda: im2col_batch(x, g),
        "col2im (adjoint of the above)": lambda: col2im_batch(cols, g, 16, 16),
        "cp_als 16x16x3x3 rank 8, 20 sweeps": lambda: cp_als(k, 8, max_iters=20, tol=0.0),
        "toy model loss+grads, batch 32": lambda: loss_and_grads(model, data.images, data.labels),
    }


def best_time(fn, repeat):
    fn()
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the python fallback only")
    header = f"{'workload':<38}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'python/compiled':>18}"
    print(header)
    for name, fn in workloads().items():
        times = {}
        for b in backends:
            with kernels.use_backend(b):
                times[b] = best_time(fn, args.repeat)
        line = f"{name:<38}" + "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
        if len(backends) == 2:
            line += f"{times['python'] / times['compiled']:>17.1f}x"
        print(line)


if __name__ == "__main__":
    main()
