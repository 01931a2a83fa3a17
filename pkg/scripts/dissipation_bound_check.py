"""Gap between continuous and discrete dissipation for random piecewise-affine paths.

Compares the gap with the bound written with the absolute value outside the
sum over increments and with the bound written with it inside.

    python3 scripts/dissipation_bound_check.py --cases 50 --kind gauss
"""

import argparse

from avi import problems
from avi.diagnostics import random_dissipation_case


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--kind", choices=["gauss", "smooth"], default="gauss")
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--square-n", type=int, default=1)
    args = ap.parse_args()
    mesh = problems.clamped_square(args.square_n)
    print("seed,T,gap,bound_outside,bound_inside")
    outside = inside = 0
    for seed in range(args.cases):
        c = random_dissipation_case(mesh, seed, args.kind)
        gap, b, babs = c.gap(args.eta), c.bound(args.eta), c.bound_abs(args.eta)
        outside += gap > b
        inside += gap > babs
        print(f"{seed},{c.T:.4f},{gap:.6e},{b:.6e},{babs:.6e}")
    print(f"# violations: outside={outside}/{args.cases} inside={inside}/{args.cases}")


if __name__ == "__main__":
    main()
