"""Black-Scholes check: weighted, finite-difference and pathwise call Greeks against closed form.

    python3 demos/gbm_validation.py --paths 200000 --steps 64
"""

import argparse

from belgreeks.estimators import FiniteDifferenceGreek, PathwiseGreek, WeightedGreek, run_estimator
from belgreeks.models import GBM
from belgreeks.oracles import bs_delta, bs_gamma
from belgreeks.payoffs import european_call


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    model, payoff = GBM(s0=100.0, sigma=0.2), european_call(100.0)
    refs = {"delta": float(bs_delta(100, 100, 0.2, 0, 1)), "gamma": float(bs_gamma(100, 100, 0.2, 0, 1))}
    estimators = [WeightedGreek(model, payoff, "BEL_delta"), PathwiseGreek(model, payoff),
                  FiniteDifferenceGreek(model, payoff), WeightedGreek(model, payoff, "BEL_gamma"),
                  FiniteDifferenceGreek(model, payoff, bump=0.05, order=2)]
    print(f"{'estimator':<22} {'greek':<6} {'estimate':>10} {'stderr':>9} {'closed form':>11} {'z':>6}")
    for est in estimators:
        r = run_estimator(est, args.paths, args.steps, args.seed)
        ref = refs[r.greek]
        print(f"{r.tag:<22} {r.greek:<6} {r.estimate:10.6f} {r.stderr:9.6f} {ref:11.6f} "
              f"{(r.estimate - ref) / r.stderr:6.2f}")


if __name__ == "__main__":
    main()
