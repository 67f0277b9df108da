"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Primitive timings (stencil and conv kernels plus their adjoints) run in
one process by importing both backend modules directly. End-to-end
timings (uncontrolled simulation steps, a controlled rollout, one taped
training episode) are re-run in a subprocess per backend so the
package-wide backend selection stays honest.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 48,96,192 --repeats 7 --csv out.csv
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from rdsteer._kernels import numpy_backend

try:
    from rdsteer._kernels import cython_backend
except ImportError:
    cython_backend = None

STENCIL = np.array([[0.05, 0.2, 0.05], [0.2, -1.0, 0.2], [0.05, 0.2, 0.05]])
CHANNELS = 16


def _time(fn, repeats: int) -> float:
    """Median wall time of fn() over `repeats` runs, warmup excluded."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def primitive_cases(size: int, gen: np.random.Generator):
    field = gen.standard_normal((size, size)).astype(np.float32)
    g2 = gen.standard_normal((size, size)).astype(np.float32)
    sten = STENCIL.astype(np.float32)
    x = gen.standard_normal((CHANNELS, size, size)).astype(np.float32)
    w = gen.standard_normal((CHANNELS, CHANNELS, 3, 3)).astype(np.float32)
    b = gen.standard_normal(CHANNELS).astype(np.float32)
    g3 = gen.standard_normal((CHANNELS, size, size)).astype(np.float32)
    return [
        ("stencil3x3", lambda be: be.stencil3x3(field, sten, diff=True)),
        ("stencil3x3_grad", lambda be: be.stencil3x3_grad_input(g2, sten, diff=True)),
        ("conv3x3", lambda be: be.conv3x3(x, w, b)),
        ("conv3x3_grad_input", lambda be: be.conv3x3_grad_input(g3, w)),
        ("conv3x3_grad_kernel", lambda be: be.conv3x3_grad_kernel(g3, x)),
    ]


def run_primitives(sizes, repeats: int):
    gen = np.random.default_rng(0)
    backends = [numpy_backend] + ([cython_backend] if cython_backend else [])
    rows = []
    for size in sizes:
        for name, call in primitive_cases(size, gen):
            timed = {be.NAME: _time(lambda be=be: call(be), repeats) for be in backends}
            rows.append({"case": name, "size": size, **{f"{k}_s": v for k, v in timed.items()}})
    return rows


END_TO_END = ("sim_step_96", "rollout_hybrid_96", "train_episode_48")


def run_end_to_end_child(repeats: int):
    """Executed in a subprocess with RDSTEER_KERNEL_BACKEND pinned."""
    from rdsteer.autodiff import Tape
    from rdsteer.controller import GainSchedule, init_controller
    from rdsteer.grayscott import SimParams, init_state, gs_step
    from rdsteer.objective import LossWeights, loss_terms
    from rdsteer.rollout import run_rollout

    sim = SimParams(height=96, width=96)
    params = init_controller(0)

    def sim_steps():
        state = init_state(10001, sim)
        for _ in range(100):
            state = gs_step(state, sim, 0.0, 0.0)
        return state

    def rollout():
        return run_rollout(params, sim, GainSchedule(amplitude=0.03), 60, 10001)

    def episode():
        params48 = init_controller(0, requires_grad=True)
        with Tape() as tape:
            rec = run_rollout(
                params48, SimParams(height=48, width=48), GainSchedule(amplitude=0.03),
                60, 10001, as_floats=False,
            )
            tape.backward(loss_terms(rec, LossWeights())["total"])
        for p in params48.parameters():
            p.grad = None
        params48.set_requires_grad(False)

    out = {
        "sim_step_96": _time(sim_steps, repeats) / 100.0,
        "rollout_hybrid_96": _time(rollout, repeats),
        "train_episode_48": _time(episode, repeats),
    }
    json.dump(out, sys.stdout)


def run_end_to_end(repeats: int):
    rows = {name: {} for name in END_TO_END}
    backends = ["numpy"] + (["cython"] if cython_backend else [])
    for backend in backends:
        env = dict(os.environ, RDSTEER_KERNEL_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child", str(repeats)],
            env=env, capture_output=True, text=True, check=True,
        )
        for name, seconds in json.loads(proc.stdout).items():
            rows[name][f"{backend}_s"] = seconds
    return [{"case": name, "size": "", **vals} for name, vals in rows.items()]


def print_table(rows):
    have_cython = any("cython_s" in r for r in rows)
    header = f"{'case':<22}{'size':>6}{'numpy':>12}" + (f"{'cython':>12}{'speedup':>9}" if have_cython else "")
    print(header)
    print("-" * len(header))
    for r in rows:
        line = f"{r['case']:<22}{str(r['size']):>6}{r['numpy_s'] * 1e3:>10.3f}ms"
        if "cython_s" in r:
            line += f"{r['cython_s'] * 1e3:>10.3f}ms{r['numpy_s'] / r['cython_s']:>8.1f}x"
        print(line)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="48,96,192", help="comma-separated grid sizes")
    ap.add_argument("--repeats", type=int, default=5, help="timed repeats per case (median reported)")
    ap.add_argument("--csv", default=None, help="also write the rows to this CSV path")
    ap.add_argument("--skip-end-to-end", action="store_true", help="primitive kernels only")
    ap.add_argument("--child", type=int, default=None, help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.child is not None:
        run_end_to_end_child(args.child)
        return 0

    if cython_backend is None:
        print("note: compiled backend not importable; timing numpy only", file=sys.stderr)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rows = run_primitives(sizes, args.repeats)
    if not args.skip_end_to_end:
        rows += run_end_to_end(args.repeats)
    print_table(rows)

    if args.csv:
        from rdsteer.runio import write_csv

        cols = ["case", "size", "numpy_s"] + (["cython_s"] if cython_backend else [])
        write_csv(args.csv, cols, rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
