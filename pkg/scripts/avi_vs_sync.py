"""AVI on identical elemental sets (relaxed mode) reproduces the synchronous trajectory.

    python3 scripts/avi_vs_sync.py --n 100 --eta 0.5
"""

import argparse

import numpy as np

from avi import integrate_avi, integrate_sync, problems
from avi.timesets import Uniform, build


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--eta", type=float, default=0.0)
    args = ap.parse_args()
    p = problems.quadratic_problem(args.eta)
    theta = build(p.model.mesh, p.t0, p.tf, Uniform(args.n), mode="relaxed")
    s = integrate_sync.run(model=p.model, timeset=theta, init=p.init)
    a = integrate_avi.run(model=p.model, timeset=theta, init=p.init)
    print("node,max_diff_u,max_diff_nu,max_diff_u_dot,max_diff_nu_dot")
    for i, (hs, ha) in enumerate(zip(s.nodes, a.nodes)):
        diffs = [np.abs(getattr(hs, f) - getattr(ha, f)).max() for f in ("u", "nu", "u_dot", "nu_dot")]
        print(f"{i}," + ",".join(f"{x:.3e}" for x in diffs))


if __name__ == "__main__":
    main()
