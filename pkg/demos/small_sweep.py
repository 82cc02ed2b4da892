"""Run the smoke preset and print a mean-error table per method.

    python3 demos/small_sweep.py [out.csv]
"""
import sys
from collections import defaultdict

from beliefopt.harness import PRESETS, sweep

out = sys.argv[1] if len(sys.argv) > 1 else "smoke.csv"
rows = sweep(PRESETS["smoke"], out)
table = defaultdict(dict)
for r in rows:
    table[(r.w_scale, r.b_scale)][r.method] = r.mean_err
methods = PRESETS["smoke"].methods
print("w_scale b_scale " + " ".join(f"{m:>9}" for m in methods))
for (w, b), errs in sorted(table.items()):
    print(f"{w:7.1f} {b:7.1f} " + " ".join(f"{errs[m]:9.2e}" for m in methods))
print(f"wrote {len(rows)} rows to {out}")
