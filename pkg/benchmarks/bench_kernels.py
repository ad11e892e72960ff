"""Compare the numba and numpy jet kernels.

Times the tanh jet forward and backward kernels on the array shapes met in
training (jet rows x batch*width columns), then one full loss-and-gradient
step of each problem under both backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from overpinn import model, oracle
from overpinn.autodiff import IndexSet, kernels
from overpinn.training import (allen_cahn_problem, build_terms, draw_batches, loss_and_gradient,
                               navier_stokes_problem)

# (label, variables, order, columns = batch * width)
KERNEL_CASES = [
    ("AC jets, 64 pts x 64 wide", 2, 3, 64 * 64),
    ("AC jets, 256 pts x 256 wide", 2, 3, 256 * 256),
    ("NS jets, 64 pts x 64 wide", 3, 2, 64 * 64),
    ("NS jets, 64 pts x 64 wide, order 3", 3, 3, 64 * 64),
]


def best_time(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(repeat):
    rows = []
    for label, nvars, order, cols in KERNEL_CASES:
        iset = IndexSet.full(nvars, order)
        rng = np.random.default_rng(0)
        A = rng.normal(size=(len(iset), cols))
        G = rng.normal(size=A.shape)
        result = {}
        for name in ("numpy", "numba"):
            kernels.set_backend(name)

            def step():
                _, S = kernels.tanh_jet_forward(A, iset.table)
                kernels.tanh_jet_backward(G, A, S, iset.table)
            result[name] = best_time(step, repeat)
        rows.append((label, result["numpy"], result["numba"]))
    return rows


def bench_training(repeat):
    f = oracle.generate_initial_vorticity(64, seed=0)
    cases = [
        ("AC overpinn step (64x3, batch 64)",
         allen_cahn_problem(hidden_dim=64, hidden_layers=3, embedding_dim=64), "overpinn"),
        ("NS ns-combined step (64x2, batch 64)",
         navier_stokes_problem("ns-combined", {"u": f.u, "v": f.v, "omega": f.omega}), "ns-combined"),
    ]
    rows = []
    for label, problem, mode in cases:
        params = model.init(replace(problem.network, seed=0))
        terms = build_terms(problem, mode)
        batches = draw_batches(problem, terms, (64, 64, 64), np.random.default_rng(0))
        result = {}
        for name in ("numpy", "numba"):
            kernels.set_backend(name)
            result[name] = best_time(lambda: loss_and_gradient(params, problem, terms, batches), repeat)
        rows.append((label, result["numpy"], result["numba"]))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    initial = kernels.get_backend()
    try:
        rows = bench_kernels(args.repeat) + bench_training(max(1, args.repeat // 4))
    finally:
        kernels.set_backend(initial)
    print(f"{'case':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, t_np, t_nb in rows:
        print(f"{label:40s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
