"""AVI on jittered asynchronous time sets: Cauchy and oracle discrepancies and pointwise variation.

    python3 scripts/jittered_convergence.py --n0 150 --max-ratio 2 --seed 3
"""

import argparse

from avi import problems
from avi.diagnostics import avi_levels, convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=150, help="steps per element on the coarsest level")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--max-ratio", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    p = problems.quadratic_problem()
    integ = avi_levels(args.n0, args.seed, args.max_ratio)
    for mode in ("cauchy", "oracle"):
        rep = convergence_study(p, integ, args.levels, mode=mode, workers=args.workers)
        print(rep.to_csv())


if __name__ == "__main__":
    main()
