"""Concordance-kernel benchmark: numba build vs pure-numpy fallback.

The kernel build is chosen at import time from RESSURV_NO_NUMBA, so the
fallback timings come from a subprocess running with that flag set. Counts
are asserted identical across builds before any timing is reported.

Usage:
    python benchmarks/bench_concordance.py
    python benchmarks/bench_concordance.py --sizes 1000 10000 50000 --repeats 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from ressurv import _kernels
from ressurv.metrics import concordance_fast, concordance_index

# pairwise is O(n^2); above this it stops being a benchmark and starts
# being a space heater
PAIRWISE_CAP = 20_000


def make_case(n: int, seed: int):
    rng = np.random.default_rng(seed)
    times = np.round(rng.exponential(scale=10.0, size=n), 1) + 0.1  # heavy ties
    events = rng.random(n) < 0.7
    if not events.any():
        events[0] = True
    scores = rng.normal(size=n)
    scores[rng.random(n) < 0.1] = 0.0  # tied scores
    return times, events, scores


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(sizes, repeats):
    rows = []
    for n in sizes:
        times, events, scores = make_case(n, seed=n)
        fast = concordance_fast(times, events, scores)
        row = {
            "n": n,
            "sweep_s": best_of(lambda: concordance_fast(times, events, scores), repeats),
            "counts": [fast.concordant, fast.discordant, fast.tied_score],
        }
        if n <= PAIRWISE_CAP:
            slow = concordance_index(times, events, scores)
            assert (slow.concordant, slow.discordant, slow.tied_score) == tuple(row["counts"])
            row["pairwise_s"] = best_of(
                lambda: concordance_index(times, events, scores), repeats
            )
        rows.append(row)
    return {"backend": _kernels.backend(), "rows": rows}


def fallback_timings(sizes, repeats):
    env = dict(os.environ, RESSURV_NO_NUMBA="1")
    cmd = [sys.executable, os.path.abspath(__file__), "--json",
           "--repeats", str(repeats), "--sizes", *map(str, sizes)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def fmt(seconds):
    return f"{seconds * 1e3:9.2f} ms" if seconds is not None else "        --"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1_000, 5_000, 20_000, 100_000])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--json", action="store_true",
                        help="print raw timings for the current backend and exit")
    args = parser.parse_args()

    # warm any JIT compilation outside the timed region
    t, e, s = make_case(200, seed=0)
    concordance_fast(t, e, s)
    concordance_index(t, e, s)

    mine = run(args.sizes, args.repeats)
    if args.json:
        print(json.dumps(mine))
        return 0

    if mine["backend"] != "numba":
        print(f"active backend is {mine['backend']!r}; no numba build to compare")
        theirs = None
    else:
        theirs = fallback_timings(args.sizes, args.repeats)
        for a, b in zip(mine["rows"], theirs["rows"]):
            assert a["counts"] == b["counts"], f"count mismatch at n={a['n']}"

    print(f"\nactive backend: {mine['backend']}")
    header = f"{'n':>9}  {'sweep ' + mine['backend']:>12}"
    if theirs:
        header += f"  {'sweep numpy':>12}  {'speedup':>8}"
    header += f"  {'pairwise ' + mine['backend']:>15}"
    if theirs:
        header += f"  {'pairwise numpy':>15}  {'speedup':>8}"
    print(header)
    for i, row in enumerate(mine["rows"]):
        line = f"{row['n']:>9}  {fmt(row['sweep_s'])}"
        if theirs:
            other = theirs["rows"][i]
            line += f"  {fmt(other['sweep_s'])}  {other['sweep_s'] / row['sweep_s']:7.1f}x"
        line += f"     {fmt(row.get('pairwise_s'))}"
        if theirs:
            ps, po = row.get("pairwise_s"), theirs["rows"][i].get("pairwise_s")
            if ps and po:
                line += f"     {fmt(po)}  {po / ps:7.1f}x"
        print(line)
    print("\ncounts verified identical across builds for every size")
    return 0


if __name__ == "__main__":
    sys.exit(main())
