"""Compare the compiled propagation kernel against the scipy fallback.

Builds training-shaped propagation plans at a few sizes and times the
forward pass through each backend (and the compiled kernel at several
thread counts).  Run directly:

    python3 benchmarks/bench_kernels.py [--dim 64] [--layers 3]
"""

import argparse
import os
import time

import numpy as np

from megcf import kernels
from megcf.graph import build_interaction_graph, build_tripartite_graph
from megcf.propagation import build_g2_plan, forward


def make_plan(num_users, num_items, num_entities, num_edges, seed=0):
    rng = np.random.default_rng(seed)
    flat = np.unique(rng.integers(0, num_users * num_items,
                                  size=int(num_edges * 1.3)))[:num_edges]
    edges = np.stack([flat // num_items, flat % num_items], axis=1)
    g1 = build_interaction_graph(edges, num_users, num_items)
    ke = 3 * num_items
    f2 = np.unique(rng.integers(0, num_items * num_entities,
                                size=int(ke * 1.4)))[:ke]
    ie = np.stack([f2 // num_entities, f2 % num_entities], axis=1)
    ents = np.unique(ie[:, 1])
    remap = -np.ones(num_entities, dtype=np.int64)
    remap[ents] = np.arange(ents.size)
    ie[:, 1] = remap[ie[:, 1]]
    tg = build_tripartite_graph(g1, ie, int(ents.size))
    return build_g2_plan(tg, None, 0.25)


def time_forward(plan, x, layers, reps=5):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        forward(x, plan, layers)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--layers", type=int, default=3)
    args = parser.parse_args()

    sizes = [(2_000, 1_500, 200, 60_000),
             (8_000, 6_000, 800, 240_000),
             (16_000, 12_000, 1_600, 480_000)]
    print(f"forward pass, {args.layers} layers, dim {args.dim} "
          f"(best of 5, ms)")
    header = f"{'nodes':>8} {'nnz':>9} {'python':>9}"
    thread_cols = [1, 2, 4] if "compiled" in kernels.available_backends() \
        else []
    for t in thread_cols:
        header += f" {'comp/' + str(t) + 't':>9}"
    print(header)

    rng = np.random.default_rng(1)
    for nu, ni, ne, m in sizes:
        plan = make_plan(nu, ni, ne, m)
        x = rng.normal(size=(plan.n_nodes, args.dim))
        row = f"{plan.n_nodes:>8} {plan.data.size:>9}"
        kernels.set_backend("python")
        baseline = time_forward(plan, x, args.layers)
        row += f" {baseline * 1e3:>9.2f}"
        for t in thread_cols:
            kernels.set_backend("compiled")
            os.environ["MEGCF_NUM_THREADS"] = str(t)
            row += f" {time_forward(plan, x, args.layers) * 1e3:>9.2f}"
            del os.environ["MEGCF_NUM_THREADS"]
        kernels.set_backend(None)
        print(row)

    if thread_cols:
        kernels.set_backend("compiled")
        a = forward(x, plan, 2)[-1]
        kernels.set_backend("python")
        b = forward(x, plan, 2)[-1]
        kernels.set_backend(None)
        print("backends bitwise identical:", np.array_equal(a, b))


if __name__ == "__main__":
    main()
