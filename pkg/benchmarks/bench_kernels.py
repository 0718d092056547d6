"""Compare the numba and numpy kernel backends.

Times each kernel and one full ARNet forward/backward step on both
backends, checks the outputs agree bitwise, and prints a table.

    python3 benchmarks/bench_kernels.py [--width 0.125] [--size 16] [--batch 32] [--repeat 20]
"""
import argparse
import time

import numpy as np

from arnet import kernels
from arnet.model import ArchConfig, backward, init_params


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(width, size, batch, rng):
    c = max(1, round(64 * width))
    x = rng.standard_normal((batch, c, size, size)).astype(np.float32)
    cols = kernels.im2col3x3(x)
    pooled, idx = kernels.maxpool2_forward(x)
    up = kernels.upsample2_forward(x)
    arch = ArchConfig(1, 1, width, size)
    params = init_params(arch, 0)
    img = rng.uniform(-1, 1, size=(batch, 1, size, size)).astype(np.float32)
    return {
        "im2col3x3": lambda: kernels.im2col3x3(x),
        "col2im3x3": lambda: kernels.col2im3x3(cols, x.shape),
        "maxpool2_forward": lambda: kernels.maxpool2_forward(x),
        "maxpool2_backward": lambda: kernels.maxpool2_backward(pooled, idx),
        "upsample2_forward": lambda: kernels.upsample2_forward(x),
        "upsample2_backward": lambda: kernels.upsample2_backward(up),
        "arnet_step": lambda: backward(params, img, img),
    }


def _flat(out):
    if isinstance(out, tuple):
        if isinstance(out[1], dict):
            return [np.asarray(out[0])] + list(out[1].values())
        return list(out)
    return [out]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--width", type=float, default=0.125)
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()

    timings, outputs = {}, {}
    for backend in kernels.BACKENDS:
        with kernels.use_backend(backend):
            fns = cases(a.width, a.size, a.batch, np.random.default_rng(0))
            for name, fn in fns.items():
                timings[name, backend] = best_of(fn, a.repeat)
                outputs[name, backend] = _flat(fn())

    print(f"width={a.width} size={a.size} batch={a.batch} (best of {a.repeat})")
    print(f"{'kernel':<20}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  bitwise")
    for name in fns:
        nb, npy = timings[name, "numba"], timings[name, "numpy"]
        same = all(np.array_equal(u, v) for u, v in
                   zip(outputs[name, "numba"], outputs[name, "numpy"]))
        print(f"{name:<20}{nb * 1e3:>10.3f}{npy * 1e3:>10.3f}{npy / nb:>8.2f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
