"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 128]

Times im2col, col2im and channel histograms on CIFAR-sized inputs, then one
forward+backward training step of the default network under each backend.
"""
import argparse
import time

import numpy as np

from kernsat import kernels
from kernsat.engine import Architecture, Network


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(backend, batch, repeat):
    kernels.use_backend(backend)
    rng = np.random.default_rng(0)
    x = rng.random((batch, 16, 32, 32), dtype=np.float32)
    cols = kernels.im2col(x, 3, 1, 1)
    px = rng.integers(0, 256, (batch * 8, 3, 1024), dtype=np.uint8)
    net = Network(Architecture(), seed=0)
    xb = rng.random((batch, 3, 32, 32), dtype=np.float32)
    yb = rng.integers(0, 10, batch)
    return {
        "im2col": best_of(lambda: kernels.im2col(x, 3, 1, 1), repeat),
        "col2im": best_of(lambda: kernels.col2im(cols, x.shape, 3, 1, 1), repeat),
        "histograms": best_of(lambda: kernels.channel_histograms(px), repeat),
        "train step": best_of(lambda: net.loss_and_grads(xb, yb), max(1, repeat // 2)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=128)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; reporting the numpy backend only")
    before = kernels.backend()
    results = {b: run(b, args.batch, args.repeat) for b in backends}
    kernels.use_backend(before)

    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name in results[backends[0]]:
        row = f"{name:<12}" + "".join(f"{results[b][name] * 1e3:>10.1f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{results['python'][name] / results['cython'][name]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
