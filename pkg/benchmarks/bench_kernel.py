"""Time the compiled event loop against the pure-Python fallback.

    python3 benchmarks/bench_kernel.py [--n 2000 20000] [--replicas 3]

Both backends consume the same Philox stream, so each pair of runs is
also checked for identical output.
"""
import argparse
import time

import numpy as np

from thetanet.measures import BetaDirac
from thetanet.simulate import RunConfig, build_event_tables, run_trajectory


def time_backend(config, backend, replicas):
    best = float("inf")
    counts = []
    events = 0
    for r in range(replicas):
        t0 = time.perf_counter()
        tr = run_trajectory(config, r, backend=backend)
        best = min(best, time.perf_counter() - t0)
        counts.append(tr.counts)
        events = tr.events_nonsilent + tr.events_silent
    return best, events, counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[2000, 20000])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--replicas", type=int, default=3)
    ap.add_argument("--mode", choices=["spectrum", "bubble"], default="spectrum")
    args = ap.parse_args(argv)

    print(f"{'n':>8} {'events':>8} {'cython s':>10} {'python s':>10} {'speed-up':>9}  identical")
    for n in args.n:
        m0 = None if args.mode == "spectrum" else max(1, n // 10)
        config = RunConfig(BetaDirac(args.alpha, 1.0), n, 4, 1.0, (0.5, 1.0), seed=7, m0=m0)
        build_event_tables(config.measure, n)  # tables are cached; keep them out of the timing
        tc, events, cc = time_backend(config, "cython", args.replicas)
        tp, _, cp = time_backend(config, "python", args.replicas)
        same = all(np.array_equal(a, b) for a, b in zip(cc, cp))
        print(f"{n:>8} {events:>8} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
