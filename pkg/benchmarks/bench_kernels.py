"""Compiled vs pure-Python thinning kernel.

    python3 benchmarks/bench_kernels.py [--sizes 250,500,1000] [--repeat 3]

Times ``simulate`` and ``simulate_coupled`` on the two-trait test model for
each backend, checks that the event logs agree bit for bit (snapshot averages may differ in
the last ulp: the two backends sum in different orders), and prints the speed-up.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from epiflux.kernels import available_backends
from epiflux.lln import solve_lln
from epiflux.model import build_model
from epiflux.simulation import simulate, simulate_coupled

ROOT = Path(__file__).resolve().parents[1]


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "modelB2.toml"))
    ap.add_argument("--sizes", default="250,500,1000")
    ap.add_argument("--horizon", type=float, default=8.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in available_backends():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    model = build_model(args.config)
    T = args.horizon
    lln = solve_lln(model, T, 0.01)
    print(f"{'task':<10}{'N':>7}{'events':>9}{'compiled [s]':>15}{'python [s]':>13}{'speed-up':>10}  match")
    for N in (int(x) for x in args.sizes.split(",")):
        tc, a = best_of(lambda: simulate(model, N, T, seed=1, backend="compiled"), args.repeat)
        tp, b = best_of(lambda: simulate(model, N, T, seed=1, backend="python"), args.repeat)
        same = (np.array_equal(a.ev_time, b.ev_time) and np.array_equal(a.ev_k, b.ev_k)
                and np.allclose(a.F_emp, b.F_emp, rtol=0, atol=1e-12))
        print(f"{'simulate':<10}{N:>7}{a.n_events:>9}{tc:>15.4f}{tp:>13.4f}{tp / tc:>10.1f}  {same}")
        tc, a = best_of(lambda: simulate_coupled(model, N, T, 1, lln, backend="compiled"), args.repeat)
        tp, b = best_of(lambda: simulate_coupled(model, N, T, 1, lln, backend="python"), args.repeat)
        same = np.array_equal(a.sup_dA, b.sup_dA) and np.array_equal(a.sup_da, b.sup_da)
        print(f"{'coupled':<10}{N:>7}{int(a.count.sum()):>9}{tc:>15.4f}{tp:>13.4f}{tp / tc:>10.1f}  {same}")


if __name__ == "__main__":
    main()
