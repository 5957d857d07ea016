"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

Runs each hot kernel on model-sized inputs, reports per-call time for both
paths plus the max absolute difference between their outputs. These numbers
drive the default MOODLYRICS_KERNELS=auto selection. Needs numba importable
(MOODLYRICS_KERNELS must not be "numpy"); otherwise there is nothing to
compare.

Usage:
    python benchmarks/bench_kernels.py [--repeats 50] [--length 256]
"""

import argparse
import time

import numpy as np

from moodlyrics import _kernels as K


def time_call(fn, repeats):
    fn()  # warmup (triggers JIT compilation on the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(float(np.abs(x - y).max()) for x, y in zip(a, b))
    return float(np.abs(a - b).max())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--length", type=int, default=256, help="sequence length")
    args = parser.parse_args()

    if not K.JIT_AVAILABLE:
        print("numba kernels unavailable (MOODLYRICS_KERNELS=numpy or numba missing);")
        print("nothing to compare.")
        return

    rng = np.random.default_rng(0)
    batch, heads, length, hidden, ffn = 8, 2, args.length, 64, 256

    scores = rng.normal(size=(batch, heads, length, length)).astype(np.float32)
    mask = np.ones((batch, length), dtype=np.float32)
    mask[:, length // 2 :] = 0.0

    x_ffn = rng.normal(size=(batch * length, ffn)).astype(np.float32)
    dy_ffn = rng.normal(size=(batch * length, ffn)).astype(np.float32)

    x_ln = rng.normal(size=(batch * length, hidden)).astype(np.float32)
    gain = rng.normal(size=hidden).astype(np.float32) + 1.0
    bias = rng.normal(size=hidden).astype(np.float32)
    dy_ln = rng.normal(size=(batch * length, hidden)).astype(np.float32)
    _, xhat, inv = K.layer_norm_numpy(x_ln, gain, bias, 1e-5)

    n_params = 200_000
    grad = rng.normal(size=n_params).astype(np.float32)

    def adamw_case(update):
        param = np.zeros(n_params, dtype=np.float32)
        m = np.zeros(n_params, dtype=np.float32)
        v = np.zeros(n_params, dtype=np.float32)
        update(param, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001)
        return param

    def jit_gelu():
        out = np.empty_like(x_ffn.reshape(-1))
        K._gelu_jit(x_ffn.reshape(-1), out)
        return out

    def jit_gelu_grad():
        out = np.empty_like(x_ffn.reshape(-1))
        K._gelu_grad_jit(x_ffn.reshape(-1), dy_ffn.reshape(-1), out)
        return out

    def jit_layer_norm():
        y = np.empty_like(x_ln)
        xh = np.empty_like(x_ln)
        istd = np.empty(x_ln.shape[0], dtype=x_ln.dtype)
        K._layer_norm_jit(x_ln, gain, bias, 1e-5, y, xh, istd)
        return y, xh, istd

    def jit_layer_norm_grad():
        dx = np.empty_like(dy_ln)
        dg = np.empty_like(gain)
        db = np.empty_like(gain)
        K._layer_norm_grad_jit(dy_ln, xhat, inv, gain, dx, dg, db)
        return dx, dg, db

    cases = [
        (
            "masked_softmax",
            lambda: K._masked_softmax_jit(scores, mask),
            lambda: K.masked_softmax_numpy(scores, mask),
        ),
        ("gelu", jit_gelu, lambda: K.gelu_numpy(x_ffn.reshape(-1))),
        (
            "gelu_grad",
            jit_gelu_grad,
            lambda: K.gelu_grad_numpy(x_ffn.reshape(-1), dy_ffn.reshape(-1)),
        ),
        (
            "layer_norm",
            jit_layer_norm,
            lambda: K.layer_norm_numpy(x_ln, gain, bias, 1e-5),
        ),
        (
            "layer_norm_grad",
            jit_layer_norm_grad,
            lambda: K.layer_norm_grad_numpy(dy_ln, xhat, inv, gain),
        ),
        (
            "adamw_update",
            lambda: adamw_case(K._adamw_update_jit),
            lambda: adamw_case(K.adamw_update_numpy),
        ),
    ]

    selection = K.selected_backends()
    print(f"mode: {K.MODE}; batch={batch} heads={heads} length={length} "
          f"hidden={hidden} ffn={ffn}")
    header = (f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}"
              f"{'max diff':>12}  selected")
    print(header)
    for name, numba_fn, numpy_fn in cases:
        t_numpy = time_call(numpy_fn, args.repeats) * 1e3
        t_numba = time_call(numba_fn, args.repeats) * 1e3
        diff = max_diff(numba_fn(), numpy_fn())
        print(f"{name:<18}{t_numpy:>10.3f}{t_numba:>10.3f}"
              f"{t_numpy / t_numba:>8.2f}x{diff:>12.2e}  {selection[name]}")


if __name__ == "__main__":
    main()
