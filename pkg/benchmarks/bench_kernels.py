#!/usr/bin/env python3
"""Benchmark the Monte Carlo kernels: numba @njit versus pure numpy.

Both backends consume identical pre-drawn arrays, so their fire counts must
agree exactly; only the wall time differs. The first numba call includes JIT
compilation, so each configuration is run once to warm up and then timed.

Usage:
    python benchmarks/bench_kernels.py [--trials 4000000] [--seed 0]
"""

import argparse
import time

from randround._backend import numba_available
from randround.scanners import FindingKind
from randround.simulator import TrialConfig, run_trials

CASES = [
    (FindingKind.EXACT_INVARIANT, 2),
    (FindingKind.EXACT_INVARIANT, 3),
    (FindingKind.PROB_INVARIANT, 3),
    (FindingKind.EXACT_INVARIANT_FREE, 4),
    (FindingKind.PROB_INVARIANT_FREE, 3),
]


def time_backend(config: TrialConfig, backend: str) -> tuple[float, int]:
    run_trials(config, backend=backend)  # warm-up (JIT compile, caches)
    started = time.perf_counter()
    report = run_trials(config, backend=backend)
    return time.perf_counter() - started, report.fires


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=4_000_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = ["numpy"]
    if numba_available():
        backends.append("numba")
    else:
        print("numba not importable; timing the numpy path only")

    header = f"{'condition':<28}{'trials':>12}" + "".join(
        f"{b + ' (s)':>14}" for b in backends
    )
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for kind, n in CASES:
        config = TrialConfig(kind=kind, n=n, trials=args.trials, seed=args.seed)
        times = {}
        fires = {}
        for backend in backends:
            times[backend], fires[backend] = time_backend(config, backend)
        if len(backends) == 2 and fires["numpy"] != fires["numba"]:
            raise SystemExit(
                f"backend mismatch on {kind.value}: {fires}"
            )
        row = f"{kind.value + f' n={n}':<28}{args.trials:>12}"
        row += "".join(f"{times[b]:>14.3f}" for b in backends)
        if len(backends) == 2:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)
    print(
        "\nfire counts agreed across backends for every condition"
        if len(backends) == 2
        else ""
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
