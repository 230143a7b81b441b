"""Compare the compiled and numpy kernel backends.

Run from the repository root after installing the package::

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 32] [--size 128]

Each row reports the best-of-N wall time per backend and the speed-up, and
checks that both backends produce bit-identical results.
"""

import argparse
import timeit

import numpy as np

from elaspoof import kernels
from elaspoof import layers as L
from elaspoof.tensor import Tensor


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def with_backend(backend, fn):
    saved = kernels._backend
    kernels._backend = backend
    try:
        return fn()
    finally:
        kernels._backend = saved


def cases(batch, size, rng):
    x = rng.random((batch, size, size, 3))
    conv1 = L.conv2d_forward(Tensor.wrap(x), Tensor.wrap(rng.normal(size=(5, 5, 3, 32))),
                             Tensor.wrap(np.zeros(32)))[0].array
    oh = size - 4
    cols = rng.random((batch, oh, oh, 5, 5, 3))
    pooled, argmax = kernels.python_backend.maxpool_forward(conv1, 2, 2, 2)
    g_pool = rng.random(pooled.shape)
    w = Tensor.wrap(rng.normal(size=(5, 5, 3, 32)) * 0.1)
    b = Tensor.wrap(np.zeros(32))
    g_conv = Tensor.wrap(rng.random(conv1.shape))

    def conv_layer():
        out, cache = L.conv2d_forward(Tensor.wrap(x), w, b)
        gx, gw, _ = L.conv2d_backward(cache, g_conv)
        return gw.array

    return {
        "im2col 5x5": lambda k: k.im2col(x, 5, 5, 1),
        "col2im 5x5": lambda k: k.col2im(cols, size, size, 1),
        "maxpool fwd": lambda k: k.maxpool_forward(conv1, 2, 2, 2)[0],
        "maxpool bwd": lambda k: k.maxpool_backward(argmax, g_pool, oh, oh, False),
        "conv layer fwd+bwd": lambda k: with_backend(k, conv_layer),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--size", type=int, default=128)
    args = ap.parse_args(argv)

    py, cy = kernels.python_backend, kernels.compiled_backend
    if cy is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"batch {args.batch}, {args.size}x{args.size}x3, best of {args.repeat}")
    print(f"{'kernel':<20}{'numpy ms':>10}{'cython ms':>11}{'speed-up':>10}  identical")
    for name, fn in cases(args.batch, args.size, rng).items():
        same = np.array_equal(fn(py), fn(cy))
        t_py = best(lambda: fn(py), args.repeat)
        t_cy = best(lambda: fn(cy), args.repeat)
        print(f"{name:<20}{1e3 * t_py:>10.1f}{1e3 * t_cy:>11.1f}{t_py / t_cy:>9.2f}x  {same}")


if __name__ == "__main__":
    main()
