"""Privacy-budget left side on the market fixture across alpha and readings of sigma.

Prints one CSV row per alpha: the lhs under sigma = max, sigma = min and the
literal reading, and the target exp(-eps) delta for comparison.
"""
import dataclasses

import numpy as np

from gpobs import hinf
from gpobs.scenario import bundled_path, load_scenario
from gpobs.synthesis import load_fixture_design


def main():
    scn = load_scenario(bundled_path("market5.cfg"))
    base = load_fixture_design(scn.plant, scn.gain.L, alpha=scn.gain.alpha)
    budget = scn.budget
    print("alpha,lhs_max,lhs_min,lhs_literal,target")
    for alpha in np.geomspace(1e-3, 1e1, 13):
        d = dataclasses.replace(base, alpha=float(alpha))
        row = [hinf.privacy_constraint_lhs(scn.plant, d, budget, sigma=s, literal=lit)
               for s, lit in (("max", False), ("min", False), ("max", True))]
        print(f"{alpha:.6g}," + ",".join(f"{x:.6g}" for x in row) + f",{budget.target:.6g}")


if __name__ == "__main__":
    main()
