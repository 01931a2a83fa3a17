"""Small reference problems shared by tests, scripts and sample configs.

Each builder mirrors one file in ``configs/``; the test-suite checks that the
two agree.
"""

from __future__ import annotations

import numpy as np

from .assembly import Model, State
from .diagnostics import Problem
from .material import ElasticForm, ExternalPotential, Material, ScalarChi, tanh_coupled_chi
from .mesh import square_mesh

QUADRATIC_U_DOT = {1: (0.3, -0.2), 3: (0.5, 0.1)}
QUADRATIC_NU_DOT = (0.4, -0.3, 0.2, 0.6)


def clamped_square(n: int = 1, k: int = 1):
    return square_mesh(n, k, {"left": "fixed_u", "right": "traction"})


def quadratic_material(eta: float = 0.0, d: int = 2, k: int = 1) -> Material:
    Q = ElasticForm.isotropic(d, k, lam=1.0, mu=1.0, kappa=2.0, beta=0.5, couple=0.3)
    W = np.diag([0.5] * d + [0.3] * k)
    return Material(Q, ScalarChi(1.0, k), rho=1.0, eta=eta,
                    potential=ExternalPotential(W, np.zeros(d + k)))


def quadratic_problem(eta: float = 0.0) -> Problem:
    """Two-triangle unit square, clamped left, fully quadratic, zero loads.

    The initial displacement is zero and only velocities are excited, so the
    exact motion starts with zero acceleration.
    """
    model = Model(clamped_square(), quadratic_material(eta))
    init = State.zeros(model.n, 2, 1)
    for a, v in QUADRATIC_U_DOT.items():
        init.u_dot[a] = v
    init.nu_dot[:, 0] = QUADRATIC_NU_DOT
    return Problem(model, init, 0.0, 1.0)


def general_chi_material(eta: float = 0.5, **chi_params) -> Material:
    base = quadratic_material(eta)
    chi = tanh_coupled_chi(1, **{"gamma": 1.0, "Xi": 2.0, **chi_params})
    return Material(base.elastic, chi, rho=1.0, eta=eta, potential=base.potential)


def general_chi_problem(eta: float = 0.5) -> Problem:
    model = Model(clamped_square(), general_chi_material(eta))
    init = State.zeros(model.n, 2, 1)
    init.u_dot[1] = (0.3, -0.2)
    init.nu_dot[:] = 0.5
    return Problem(model, init, 0.0, 1.0)


def gradient_only_problem(n: int = 2) -> Problem:
    """Free square, energy of (grad u, grad nu) only, no loads."""
    mesh = square_mesh(n, 1)
    Q = ElasticForm.isotropic(2, 1, lam=0.5, mu=1.0, kappa=0.0, beta=0.5)
    model = Model(mesh, Material(Q, ScalarChi(1.0, 1)))
    init = State.zeros(model.n, 2, 1)
    init.u_dot[0] = (0.4, -0.1)
    init.u_dot[4] = (-0.2, 0.3)
    init.nu_dot[8] = 0.7
    init.u[2] = (0.05, 0.0)
    return Problem(model, init, 0.0, 1.0)
