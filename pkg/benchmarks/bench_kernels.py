"""Compare the compiled kernel backend against the numpy reference.

Run: python benchmarks/bench_kernels.py [--rows 4096] [--cols 640] [--repeat 20]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gencomp.kernels import HAVE_EXT, reference as ref

if HAVE_EXT:
    from gencomp.kernels import _ext as ext
else:
    ext = None


def bench(fn, args, repeat: int) -> float:
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--cols", type=int, default=640)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()

    if ext is None:
        print("compiled backend not available; build the package first")
        return

    dt = np.dtype(args.dtype)
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((args.rows, args.cols)).astype(dt))
    dy = np.ascontiguousarray(rng.standard_normal((args.rows, args.cols)).astype(dt))
    flat = np.ascontiguousarray(x.ravel())
    dflat = np.ascontiguousarray(dy.ravel())
    y_sm = ref.softmax2d(x)
    y_ln, rstd = ref.layernorm2d(x, 1e-6)

    cases = [
        ("softmax", (x,)),
        ("softmax_bwd", (y_sm, dy)),
        ("layernorm", (x, 1e-6)),
        ("layernorm_bwd", (y_ln, rstd, dy)),
        ("gelu", (flat,)),
        ("gelu_bwd", (flat, dflat)),
    ]
    ref_fns = {
        "softmax": ref.softmax2d, "softmax_bwd": ref.softmax2d_bwd,
        "layernorm": ref.layernorm2d, "layernorm_bwd": ref.layernorm2d_bwd,
        "gelu": ref.gelu, "gelu_bwd": ref.gelu_bwd,
    }
    ext_fns = {
        "softmax": ext.softmax2d, "softmax_bwd": ext.softmax2d_bwd,
        "layernorm": ext.layernorm2d, "layernorm_bwd": ext.layernorm2d_bwd,
        "gelu": ext.gelu, "gelu_bwd": ext.gelu_bwd,
    }

    print(f"{args.rows}x{args.cols} {args.dtype}, mean of {args.repeat} runs")
    print(f"{'kernel':<16}{'numpy (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}")
    for name, call_args in cases:
        t_ref = bench(ref_fns[name], call_args, args.repeat) * 1e3
        t_ext = bench(ext_fns[name], call_args, args.repeat) * 1e3
        print(f"{name:<16}{t_ref:>12.3f}{t_ext:>15.3f}{t_ref / t_ext:>8.1f}x")


if __name__ == "__main__":
    main()
