"""Timing comparison of the numba and numpy backends.

Run as a script; prints a small table of per-call times for the three
hot kernels plus one end-to-end joint training. The numba column includes
a warmup call so JIT compilation is not billed to the measurement.
"""

import argparse
import time

import numpy as np

from layermatch import _backend
from layermatch.matcher import TrainConfig, parse_plan, train_joint


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(backend_name, repeat=20):
    be = _backend.get_backend(backend_name)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((240, 240)).astype(np.float32)
    w = (rng.standard_normal((160, 240)).astype(np.float32) * 0.05)
    b = np.zeros(160, dtype=np.float32)
    h = be.affine_sigmoid(x, w, b)
    delta_up = rng.standard_normal(h.shape).astype(np.float32)

    q = rng.standard_normal((200, 31))
    y = np.where(rng.random(200) < 0.5, -1.0, 1.0)

    rows = {}
    rows["affine_sigmoid 240x240->160"] = _time(
        lambda: be.affine_sigmoid(x, w, b), repeat)
    be.backward_delta(delta_up, w, x)  # warmup
    rows["backward_delta 160->240"] = _time(
        lambda: be.backward_delta(delta_up, w, x), repeat)
    be.dual_cd(q, y, 1.0, 1e-3, 200)
    rows["dual_cd 200x31"] = _time(
        lambda: be.dual_cd(q, y, 1.0, 1e-3, 200), repeat)
    return rows


def bench_training(backend_name, repeat=3):
    be = _backend.get_backend(backend_name)
    rng = np.random.default_rng(7)
    n = 240
    z = rng.standard_normal((n, 8))
    s = np.tanh(z @ rng.standard_normal((8, 100)) + 0.1 * rng.standard_normal((n, 100)))
    t = np.tanh(z @ rng.standard_normal((8, 40)) + 0.1 * rng.standard_normal((n, 40)))
    plan = parse_plan("2:2,3:3,4:4")
    config = TrainConfig(
        top_width=20, lr=0.2, momentum=0.95, corr_weight=1.0,
        max_iters=8, steps_per_iter=4, pretrain_epochs=30,
        fine_tune_epochs=8, cca_reg=1e-2, backend=be)

    def once():
        train_joint(s, t, plan, config, seed=3)

    once()  # warmup
    return _time(once, repeat)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20,
                        help="timing repetitions per kernel (best-of)")
    args = parser.parse_args()

    names = _backend.available_backends()
    results = {name: bench_kernels(name, args.repeat) for name in names}
    train_times = {name: bench_training(name) for name in names}

    kernels = list(next(iter(results.values())))
    width = max(len(k) for k in kernels + ["joint training 100/40"])
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>10}" for n in names)
    print(header)
    print("-" * len(header))
    for kernel in kernels:
        cells = "  ".join(f"{results[n][kernel] * 1e3:>8.2f}ms" for n in names)
        print(f"{kernel:<{width}}  {cells}")
    cells = "  ".join(f"{train_times[n] * 1e3:>8.0f}ms" for n in names)
    print(f"{'joint training 100/40':<{width}}  {cells}")
    if len(names) > 1:
        base = train_times.get("numpy")
        fast = train_times.get("numba")
        if base and fast:
            print(f"\njoint training speedup numba vs numpy: {base / fast:.2f}x")


if __name__ == "__main__":
    main()
