"""Example 1 walk-through: inner intervals with and without Stokes rows.

    python demos/example_one.py [max_degree]

Prints rho_d and the certified interval {x : w_d(x) < eps} for each degree,
next to the true feasible interval from the closed-form oracle.
"""

import sys
from pathlib import Path

from drchance import build_base, build_stokes, extract_inner, feasible_set_oracle, load_spec, solve

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "ex1.json"


def fmt(ivs):
    return ", ".join(f"[{lo:.4f}, {hi:.4f}]" for lo, hi in ivs) or "empty"


def main(max_degree=8):
    spec = load_spec(CONFIG)
    truth = feasible_set_oracle(spec, X_steps=4001)
    print(f"true feasible set at eps={spec.epsilon}: {fmt(truth.feasible_intervals())}")
    for degree in range(4, max_degree + 1, 2):
        for name, builder in (("base", build_base), ("stokes", build_stokes)):
            res = solve(builder(spec, degree // 2))
            ivs = extract_inner(res, spec.epsilon).intervals() if res.ok else []
            print(f"d={degree:<3} {name:<7} {res.status:<13} rho={res.rho_d:.6f}  inner={fmt(ivs)}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 8)
