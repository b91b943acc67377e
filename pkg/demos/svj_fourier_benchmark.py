"""SVJ / SVJJ European call delta and gamma: weights against characteristic-function values.

    python3 demos/svj_fourier_benchmark.py --paths 200000 --steps 128
"""

import argparse

from belgreeks.estimators import WeightedGreek, run_estimator
from belgreeks.models import SvjParams, make_svj, make_svjj
from belgreeks.oracles import fourier_european_price_delta
from belgreeks.payoffs import european_call


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--steps", type=int, default=128)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    payoff = european_call(100.0)
    for name, params, build, delta_family in (("SVJ", SvjParams(), make_svj, "SVJ_delta"),
                                              ("SVJJ", SvjParams(gamma=0.4), make_svjj, "SVJJ_delta")):
        ref = fourier_european_price_delta(params, 100.0, 1.0)
        model = build(params)
        print(f"\n{name}: Fourier price {ref.price.value:.5f}")
        for family, target in ((delta_family, ref.delta), ("SVJ_gamma", ref.gamma)):
            r = run_estimator(WeightedGreek(model, payoff, family), args.paths, args.steps, args.seed)
            print(f"{family:<11} {r.estimate:.6f} +- {r.stderr:.6f}   Fourier {target.value:.6f}"
                  f"   z = {(r.estimate - target.value) / r.stderr:+.2f}")


if __name__ == "__main__":
    main()
