"""Reproduce the bundled benchmark aggregates.

The package ships per-generator reference tables: decomposition scores for
seven methods across twelve text-generation models, and two aligned runs of
factual-precision scoring for the correlation check.
"""

import csv
from importlib import resources

from claimdecomp.metrics import macro_average, pearson


def rows(name):
    path = resources.files("claimdecomp.data") / name
    with resources.as_file(path) as real, open(real, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# macro averages: mean of the twelve per-generator values per method
per_lm = rows("benchmark_decompscore.csv")
printed = {r["method"]: float(r["macro"])
           for r in rows("benchmark_decompscore_macro.csv")}

print("decomposition score, macro-averaged across generators:")
for method, reference in printed.items():
    computed = macro_average({r["generator"]: float(r[method]) for r in per_lm})
    print(f"  {method:10s} computed={computed:6.2f}  reference={reference:5.1f}")

# ---------------------------------------------------------------------------
# correlation between two scoring setups over the same twelve generators
run_a = rows("benchmark_agreement_a.csv")
run_b = rows("benchmark_agreement_b.csv")
print("\nagreement between the two setups (Pearson rho):")
for column in ("factscore", "subclaims"):
    rho = pearson([float(r[column]) for r in run_a],
                  [float(r[column]) for r in run_b])
    print(f"  {column}: {rho:.4f}")
