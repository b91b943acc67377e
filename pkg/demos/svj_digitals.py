"""Digital-option deltas under SVJ / SVJJ: weight, localised hybrid and finite differences.

Prints one convergence table per (model, payoff) with the standard error of
each estimator as the path budget grows.

    python3 demos/svj_digitals.py --paths 2000 8000 32000 --steps 128
"""

import argparse

from belgreeks.estimators import FiniteDifferenceGreek, LocalisedGreek, WeightedGreek, convergence_study
from belgreeks.models import SvjParams, make_svj, make_svjj
from belgreeks.payoffs import digital_cliquet, double_digital


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, nargs="+", default=[2000, 8000, 32000])
    ap.add_argument("--steps", type=int, default=128)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    models = {"SVJ": (make_svj(SvjParams()), "SVJ_delta"),
              "SVJJ": (make_svjj(SvjParams(gamma=0.4)), "SVJJ_delta")}
    payoffs = {"double digital [100,110]": double_digital(100.0, 110.0),
               "cliquet [5,10] on S_T - S_0.5": digital_cliquet(5.0, 10.0, 0.5, 1.0)}
    for mname, (model, family) in models.items():
        for pname, payoff in payoffs.items():
            print(f"\n{mname}, {pname}")
            ests = {"weight": WeightedGreek(model, payoff, family),
                    "localised": LocalisedGreek(model, payoff, family),
                    "fd (crn)": FiniteDifferenceGreek(model, payoff),
                    "fd (independent)": FiniteDifferenceGreek(model, payoff, crn=False)}
            tables = {k: convergence_study(e, args.paths, [args.steps], args.seed) for k, e in ests.items()}
            print(f"{'paths':>8} " + " ".join(f"{k:>26}" for k in tables))
            for i, n in enumerate(args.paths):
                cells = (f"{t.rows[i].result.estimate:+.5f} +- {t.rows[i].result.stderr:.5f}" for t in tables.values())
                print(f"{n:>8} " + " ".join(f"{c:>26}" for c in cells))


if __name__ == "__main__":
    main()
