"""Regenerate src/hybrid_attitude/data/fixtures.json.

Each fixture stores the observations of a small hybrid scenario together with
the fixed solution, after checking that solution against an exhaustive scan of
the constrained cost over a box around it.
"""

import json
import pathlib

import numpy as np

from hybrid_attitude.checks import brute_force_fix, make_fixture, solve_fixture

SEEDS = (101, 102, 103, 104)
OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "hybrid_attitude" / "data" / "fixtures.json"


def main():
    fixtures = []
    for seed in SEEDS:
        fx = make_fixture(seed)
        fl, fixed = solve_fixture(fx)
        cost, Z = brute_force_fix(fl, fixed.Z_fixed, radius=2)
        assert np.array_equal(Z, fixed.Z_fixed), f"seed {seed}: search is not optimal"
        fx["expected"] = {
            "Z_fixed": fixed.Z_fixed.tolist(),
            "R_fixed": fixed.R_fixed.tolist(),
            "cost": fixed.cost,
        }
        print(seed, "success" if np.array_equal(fixed.Z_fixed, fx["Z_true"]) else "wrong fix",
              f"cost {fixed.cost:.4f}")
        fixtures.append(fx)
    OUT.write_text(json.dumps(fixtures, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
