"""Batch driver: ``avi run | converge | validate | mesh-info``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import diagnostics as dg
from . import integrate_avi, integrate_sync
from .config import Case, ConfigError, build_case, load
from .integrate_avi import IntegrationError
from .material import validate_assumptions
from .mesh import Marker, MeshError, grad_bound_constant, lumped_coefficients, read_mesh

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("avi")


def _threads() -> int:
    raw = os.environ.get("AVI_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("AVI_THREADS", f"expected an integer, got {raw!r}") from None


def integrate(case: Case, timeset=None):
    cfg = case.config
    theta = case.timeset if timeset is None else timeset
    if cfg.problem.integrator == "avi":
        return integrate_avi.run(model=case.model, timeset=theta, init=case.init,
                                 max_T=cfg.timeset.max_T)
    return integrate_sync.run(model=case.model, timeset=theta, init=case.init,
                              quadrature=cfg.sync.quadrature, tol=cfg.sync.tol,
                              max_iters=cfg.sync.max_iters)


def summarize(case: Case, traj, runtime: float) -> dict:
    m = traj.timeset.metrics
    out = {
        "integrator": traj.integrator,
        "t0": traj.t0,
        "tf": traj.tf,
        "T_theta": m.T,
        "tau_theta": m.tau,
        "h_theta": m.h,
        "events": traj.events,
        "max_rate": traj.max_rate(),
    }
    if case.config.diagnostics.energy:
        out["initial_energy"] = dg.energy(traj, traj.t0).total
        out["final_energy"] = dg.energy(traj, traj.tf).total
    if case.config.diagnostics.pv:
        out["pV_u"] = dg.pointwise_variation(traj, "u")
        out["pV_nu"] = dg.pointwise_variation(traj, "nu")
    out["runtime_s"] = runtime
    return out


def format_summary(summary: dict) -> str:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)

    return "".join(f"{k}={fmt(v)}\n" for k, v in summary.items())


def cmd_run(args) -> int:
    case = build_case(load(args.config))
    out = args.output or case.output_dir
    start = time.perf_counter()
    traj = integrate(case)
    runtime = time.perf_counter() - start
    text = format_summary(summarize(case, traj, runtime))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "trajectory.csv"), "w") as fh:
        traj.write_csv(fh)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_converge(args) -> int:
    if args.levels < 3:
        raise ConfigError("--levels", "a convergence study needs at least 3 levels")
    case = build_case(load(args.config))
    mode = args.mode or case.config.diagnostics.convergence
    if mode == "auto":
        mode = "oracle" if case.material.chi.quadratic else "cauchy"
    problem = dg.Problem(case.model, case.init, case.config.problem.t0, case.config.problem.tf)

    def integrator(_problem, level):
        return integrate(case, case.timeset_at(level))

    report = dg.convergence_study(problem, integrator, args.levels, mode=mode, workers=_threads())
    text = report.to_csv()
    out = args.output or case.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def validate_case(case: Case, pairs: int = 100) -> list[str]:
    """Assumption report plus mesh and Psi-monotonicity lines."""
    cfg = case.config
    rep = validate_assumptions(case.material, case.mesh, seed=cfg.problem.seed)
    lines = rep.format().splitlines()
    mesh = case.mesh
    lines.insert(0, f"PASS mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements, "
                    f"volume {mesh.total_volume:.6g}, c_T={grad_bound_constant(mesh):.6g}")
    if cfg.problem.integrator == "sync" and rep.gamma > 0:
        dt = case.timeset.metrics.T
        st = case.init
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ctx = integrate_sync.PsiContext(case.model, dt, st.nu, st.nu, st.nu_dot,
                                            cfg.sync.quadrature)
        if ctx.size:
            ratios = integrate_sync.monotonicity_ratios(ctx, pairs, rng=cfg.problem.seed)
            w = case.model.coeffs.weights[ctx.free]
            # lumped form of the strong monotonicity bound (gamma/2) |x - y|^2
            need = float(w.min()) * rep.gamma / 2
            ok = bool(ratios.min() >= need - 1e-9)
            lines.append(f"{'PASS' if ok else 'FAIL'} Psi monotonicity: min ratio "
                         f"{ratios.min():.6g} vs w_min gamma/2 = {need:.6g} at dt={dt:.6g} "
                         f"(T0={rep.T0:.6g})")
    return lines


def cmd_validate(args) -> int:
    case = build_case(load(args.config))
    lines = validate_case(case)
    sys.stdout.write("\n".join(lines) + "\n")
    failed = any(line.startswith("FAIL") for line in lines)
    return 1 if (failed and args.strict) else EXIT_OK


def cmd_mesh_info(args) -> int:
    try:
        mesh = read_mesh(args.meshfile)
    except OSError as exc:
        raise ConfigError("meshfile", f"cannot read {args.meshfile}: {exc.strerror}") from None
    except MeshError as exc:
        raise ConfigError("meshfile", str(exc)) from None
    vol = mesh.volumes
    co = lumped_coefficients(mesh, 1.0)
    counts = {mk.value: len(mesh.facets_with(mk)) for mk in Marker}
    info = {
        "dim": mesh.dim,
        "k": mesh.k,
        "nodes": mesh.n_nodes,
        "elements": mesh.n_elements,
        "volume": mesh.total_volume,
        "min_element_volume": float(vol.min()),
        "max_element_volume": float(vol.max()),
        "grad_bound_constant": grad_bound_constant(mesh),
        "min_lumped_mass": float(co.mass.min()),
        "fixed_u_nodes": int(mesh.fixed_u_nodes.sum()),
        "fixed_nu_nodes": int(mesh.fixed_nu_nodes.sum()),
    }
    info.update({f"facets_{k}": v for k, v in counts.items()})
    sys.stdout.write(format_summary(info))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="avi", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate one configuration")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (default: problem.output)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", help="refinement study")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--mode", choices=("auto", "oracle", "cauchy"))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("validate", help="check structural assumptions")
    p.add_argument("config")
    p.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mesh-info", help="mesh statistics")
    p.add_argument("meshfile")
    p.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
