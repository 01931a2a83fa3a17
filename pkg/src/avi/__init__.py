"""Variational time integrators for linearized bodies with a substructural descriptor.

Displacement u and descriptor nu live on piecewise-linear simplicial meshes.
The asynchronous integrator lets every element step on its own time set; the
synchronous integrator handles non-quadratic kinetic co-energies through a
monotone implicit solve. An exact matrix-exponential oracle and diagnostics
support convergence studies.
"""

from .assembly import Model, State
from .material import (ElasticForm, ExternalPotential, GeneralChi, Material, MatrixChi, ScalarChi,
                       validate_assumptions)
from .mesh import Mesh, load_mesh, read_mesh, square_mesh
from .timesets import Jittered, PerElementUniform, TimeSet, Uniform, build

__all__ = [
    "ElasticForm", "ExternalPotential", "GeneralChi", "Jittered", "Material", "MatrixChi", "Mesh",
    "Model", "PerElementUniform", "ScalarChi", "State", "TimeSet", "Uniform", "build",
    "load_mesh", "read_mesh", "square_mesh", "validate_assumptions",
]

__version__ = "0.1.0"
