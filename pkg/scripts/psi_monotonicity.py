"""Strong monotonicity of the synchronous residual map for a non-quadratic co-energy.

Sweeps the step across the monotonicity window T0 and reports the smallest
ratio <Psi(x) - Psi(y), x - y> / |x - y|^2 and Newton iteration counts.

    python3 scripts/psi_monotonicity.py --pairs 100
"""

import argparse
import warnings

import numpy as np

from avi import integrate_sync, problems


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=100)
    ap.add_argument("--eta", type=float, default=0.0)
    ap.add_argument("--quadrature", choices=["vertex", "gauss"], default="vertex")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    model = problems.general_chi_problem(args.eta).model
    rng = np.random.default_rng(args.seed)
    shape = (model.n, model.k)
    print("dt,dt_over_T0,min_ratio,max_iterations")
    for frac in (0.25, 0.5, 0.75, 1.0, 1.5):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            probe = integrate_sync.PsiContext(model, 1.0, np.zeros(shape), np.zeros(shape),
                                              np.zeros(shape), args.quadrature)
            dt = frac * probe.T0
            ratios, iters = [], []
            for _ in range(args.pairs):
                ctx = integrate_sync.PsiContext(model, dt, rng.uniform(-1, 1, shape),
                                                rng.uniform(-1, 1, shape),
                                                rng.uniform(-1, 1, shape), args.quadrature)
                ratios.append(integrate_sync.monotonicity_ratios(ctx, 1, rng=rng)[0])
                rhs = integrate_sync.psi_eval(ctx, ctx.initial_guess() + rng.standard_normal(ctx.size))
                _, info = integrate_sync.solve_psi(ctx, rhs, tol=1e-10, max_iters=50,
                                                   return_info=True)
                iters.append(info.iterations)
        print(f"{dt:.4f},{frac:.2f},{min(ratios):.6f},{max(iters)}")


if __name__ == "__main__":
    main()
