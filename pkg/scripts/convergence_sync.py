"""Second-order convergence of the synchronous integrator against the exact solution.

    python3 scripts/convergence_sync.py --n0 100 --levels 3
"""

import argparse

from avi import problems
from avi.diagnostics import convergence_study, sync_levels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=100, help="steps on the coarsest level")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--quadrature", choices=["vertex", "gauss"], default="vertex")
    ap.add_argument("--eta", type=float, default=0.0)
    args = ap.parse_args()
    rep = convergence_study(problems.quadratic_problem(args.eta),
                            sync_levels(args.n0, args.quadrature), args.levels)
    print(rep.to_csv(), end="")
    e = rep.errors
    print("# ratios=" + ",".join(f"{a / b:.4f}" for a, b in zip(e[:-1], e[1:])))


if __name__ == "__main__":
    main()
