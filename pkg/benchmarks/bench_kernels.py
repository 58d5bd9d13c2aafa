"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the two hot paths (evolution assembly, output-config classification)
on each corpus machine under both backends, in subprocesses so the import
switch (QTM_PURE_PYTHON) is honored, and prints a table with speedups.

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from qtmlab import _core
from qtmlab.machines import CORPUS_MACHINES, ConfigSpace, load_corpus_machine

repeats = int(sys.argv[1])
rows = []
for name in CORPUS_MACHINES:
    m = load_corpus_machine(name)
    cs = ConfigSpace(m, m.window)
    offsets, rule_q, rule_write, rule_move, rule_amp = m.rule_table()
    args = (
        cs.n_states, cs.tapes, cs.window, cs.start_index, cs.final_index,
        np.ascontiguousarray(offsets), np.ascontiguousarray(rule_q),
        np.ascontiguousarray(rule_write), np.ascontiguousarray(rule_move),
        np.ascontiguousarray(rule_amp),
    )
    best_asm = min(
        (lambda t0: (_core.assemble_evolution_coo(*args), time.perf_counter() - t0)[1])(
            time.perf_counter()
        )
        for _ in range(repeats)
    )
    support = np.arange(cs.dim, dtype=np.int64)
    best_cls = min(
        (lambda t0: (
            _core.classify_output_configs(
                support, cs.n_states, cs.tapes, cs.window, cs.final_index, cs.out_tape
            ),
            time.perf_counter() - t0,
        )[1])(time.perf_counter())
        for _ in range(repeats)
    )
    rows.append({"machine": name, "dim": cs.dim, "assemble": best_asm, "classify": best_cls})
print(json.dumps({"backend": _core.KERNEL_BACKEND, "rows": rows}))
"""


def run_backend(pure: bool, repeats: int) -> dict:
    env = os.environ.copy()
    if pure:
        env["QTM_PURE_PYTHON"] = "1"
    else:
        env.pop("QTM_PURE_PYTHON", None)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeats)],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(proc.stdout)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = ap.parse_args()

    fast = run_backend(pure=False, repeats=args.repeats)
    slow = run_backend(pure=True, repeats=args.repeats)
    if fast["backend"] == slow["backend"]:
        print(
            f"note: both runs used the {fast['backend']} backend "
            "(compiled extension unavailable?)"
        )

    header = f"{'machine':<10} {'dim':>7}  {'kernel':<9} {'compiled':>10} {'fallback':>10} {'speedup':>8}"
    print(f"backends: {fast['backend']} vs {slow['backend']}, best of {args.repeats}")
    print(header)
    print("-" * len(header))
    for f_row, s_row in zip(fast["rows"], slow["rows"]):
        assert f_row["machine"] == s_row["machine"]
        for kernel in ("assemble", "classify"):
            ratio = s_row[kernel] / f_row[kernel] if f_row[kernel] > 0 else float("inf")
            print(
                f"{f_row['machine']:<10} {f_row['dim']:>7}  {kernel:<9} "
                f"{f_row[kernel] * 1e3:>8.2f}ms {s_row[kernel] * 1e3:>8.2f}ms "
                f"{ratio:>7.1f}x"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
