"""INI run configurations: parsing, validation, round-trip dumping and case building.

Sections and keys::

    [problem]     mesh (file path or "square"), square_n, k, markers, output,
                  t0, tf, integrator = avi|sync, seed
    [material]    Q = iso lam mu kappa beta [couple] | lower <row-major lower triangle>
                  W, g (rows separated by ';'), w0, rho, eta,
                  chi = scalar|matrix|general, rho_bar, Omega,
                  chi.model, chi.gamma, chi.Xi, chi.box, chi.samples, chi.<param>,
                  traction (applied to every traction facet), traction.<a>-<b>[-<c>]
    [timeset]     policy = uniform|per_element_uniform|jittered, n, per_element,
                  max_ratio, mode = strict|relaxed, max_T
    [sync]        quadrature = vertex|gauss, tol, max_iters
    [init]        u, nu, u_dot, nu_dot (constant on free channels),
                  <field>.<node> overrides, modal = none|lowest,
                  modal_amplitude, modal_field = velocity|displacement
    [diagnostics] energy, pv, convergence = auto|oracle|cauchy

Randomness (jittered sets, samplers) derives from problem.seed.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import mesh as meshmod
from .assembly import Model, State
from .material import (GENERAL_CHI_MODELS, ElasticForm, ExternalPotential, Material, MatrixChi,
                       ScalarChi, xi_size)
from .timesets import TimeSet, build, policy_from_config


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


FIELDS = ("u", "nu", "u_dot", "nu_dot")


@dataclass(frozen=True)
class ProblemConfig:
    mesh: str = "square"
    square_n: int = 1
    k: int = 1
    markers: tuple[tuple[str, str], ...] = ()
    output: str = "out"
    t0: float = 0.0
    tf: float = 1.0
    integrator: str = "sync"
    seed: int = 0


@dataclass(frozen=True)
class MaterialConfig:
    Q_kind: str = "iso"
    Q_values: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    W: tuple[tuple[float, ...], ...] | None = None
    g: tuple[float, ...] | None = None
    w0: float | None = None
    rho: float = 1.0
    eta: float = 0.0
    chi: str = "scalar"
    rho_bar: float = 1.0
    Omega: tuple[tuple[float, ...], ...] | None = None
    chi_model: str = "tanh_coupled"
    chi_params: tuple[tuple[str, float], ...] = ()
    traction: tuple[float, ...] | None = None
    facet_traction: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...] = ()


@dataclass(frozen=True)
class TimeSetConfig:
    policy: str = "uniform"
    n: int = 100
    per_element: tuple[int, ...] = ()
    max_ratio: float = 2.0
    mode: str = "relaxed"
    max_T: float | None = None


@dataclass(frozen=True)
class SyncConfig:
    quadrature: str = "vertex"
    tol: float = 1e-12
    max_iters: int = 50


@dataclass(frozen=True)
class InitConfig:
    constants: tuple[tuple[str, tuple[float, ...]], ...] = ()
    overrides: tuple[tuple[str, int, tuple[float, ...]], ...] = ()
    modal: str = "none"
    modal_amplitude: float = 1.0
    modal_field: str = "velocity"


@dataclass(frozen=True)
class DiagnosticsConfig:
    energy: bool = True
    pv: bool = True
    convergence: str = "auto"


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    timeset: TimeSetConfig = field(default_factory=TimeSetConfig)
    sync: SyncConfig = field(default_factory=SyncConfig)
    init: InitConfig = field(default_factory=InitConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    base_dir: str = field(default=".", compare=False)


# -- value parsing ------------------------------------------------------------------


def _float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _bool(key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _vector(key, text):
    return tuple(_float(key, t) for t in text.split())


def _matrix(key, text):
    rows = tuple(_vector(key, r) for r in text.split(";") if r.strip())
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError(key, "expected rows of equal length separated by ';'")
    return rows


def _choice(key, text, options):
    t = text.strip()
    if t not in options:
        raise ConfigError(key, f"expected one of {'|'.join(options)}, got {t!r}")
    return t


def _fmt(x) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in v)


def _fmt_mat(m) -> str:
    return "; ".join(_fmt_vec(r) for r in m)


# -- loading ------------------------------------------------------------------------


_KNOWN = {
    "problem": {"mesh", "square_n", "k", "markers", "output", "t0", "tf", "integrator", "seed"},
    "material": {"q", "w", "g", "w0", "rho", "eta", "chi", "rho_bar", "omega", "traction"},
    "timeset": {"policy", "n", "per_element", "max_ratio", "mode", "max_t"},
    "sync": {"quadrature", "tol", "max_iters"},
    "init": {"u", "nu", "u_dot", "nu_dot", "modal", "modal_amplitude", "modal_field"},
    "diagnostics": {"energy", "pv", "convergence"},
}


def loads(text: str, base_dir: str = ".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(sec, "unknown section")
        for key in cp[sec]:
            base = key.split(".")[0].lower()
            if base not in _KNOWN[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")

    def get(sec, key):
        return cp[sec][key] if cp.has_section(sec) and key in cp[sec] else None

    p = ProblemConfig()
    kw = {}
    for key in ("mesh", "output"):
        if (v := get("problem", key)) is not None:
            kw[key] = v.strip()
    for key in ("square_n", "k", "seed"):
        if (v := get("problem", key)) is not None:
            kw[key] = _int(f"problem.{key}", v)
    for key in ("t0", "tf"):
        if (v := get("problem", key)) is not None:
            kw[key] = _float(f"problem.{key}", v)
    if (v := get("problem", "integrator")) is not None:
        kw["integrator"] = _choice("problem.integrator", v, ("avi", "sync"))
    if (v := get("problem", "markers")) is not None:
        pairs = []
        for tok in v.split():
            side, _, marker = tok.partition("=")
            if side not in ("left", "right", "bottom", "top") or not marker:
                raise ConfigError("problem.markers", f"expected side=marker, got {tok!r}")
            pairs.append((side, _choice("problem.markers", marker, tuple(m.value for m in meshmod.Marker))))
        kw["markers"] = tuple(pairs)
    p = replace(p, **kw)

    m = MaterialConfig()
    kw = {}
    if (v := get("material", "Q")) is not None:
        kind, *vals = v.split()
        kind = _choice("material.Q", kind, ("iso", "lower"))
        kw["Q_kind"] = kind
        kw["Q_values"] = tuple(_float("material.Q", x) for x in vals)
    for key in ("W", "Omega"):
        if (v := get("material", key)) is not None:
            kw[key] = _matrix(f"material.{key}", v)
    if (v := get("material", "g")) is not None:
        kw["g"] = _vector("material.g", v)
    for key in ("w0", "rho", "eta", "rho_bar"):
        if (v := get("material", key)) is not None:
            kw[key] = _float(f"material.{key}", v)
    if (v := get("material", "chi")) is not None:
        kw["chi"] = _choice("material.chi", v, ("scalar", "matrix", "general"))
    params = []
    facets = []
    if cp.has_section("material"):
        for key, v in cp["material"].items():
            if key.startswith("chi."):
                name = key[4:]
                if name == "model":
                    kw["chi_model"] = _choice(f"material.{key}", v, tuple(GENERAL_CHI_MODELS))
                else:
                    params.append((name, _float(f"material.{key}", v)))
            elif key == "traction":
                kw["traction"] = _vector("material.traction", v)
            elif key.startswith("traction."):
                try:
                    facet = tuple(sorted(int(i) for i in key[9:].split("-")))
                except ValueError:
                    raise ConfigError(f"material.{key}", "expected traction.<a>-<b>[-<c>]") from None
                facets.append((facet, _vector(f"material.{key}", v)))
    kw["chi_params"] = tuple(sorted(params))
    kw["facet_traction"] = tuple(sorted(facets))
    m = replace(m, **kw)

    ts = TimeSetConfig()
    kw = {}
    if (v := get("timeset", "policy")) is not None:
        kw["policy"] = _choice("timeset.policy", v, ("uniform", "per_element_uniform", "jittered"))
    if (v := get("timeset", "n")) is not None:
        kw["n"] = _int("timeset.n", v)
    if (v := get("timeset", "per_element")) is not None:
        kw["per_element"] = tuple(_int("timeset.per_element", x) for x in v.split())
    if (v := get("timeset", "max_ratio")) is not None:
        kw["max_ratio"] = _float("timeset.max_ratio", v)
    if (v := get("timeset", "mode")) is not None:
        kw["mode"] = _choice("timeset.mode", v, ("strict", "relaxed"))
    if (v := get("timeset", "max_T")) is not None:
        kw["max_T"] = _float("timeset.max_T", v)
    ts = replace(ts, **kw)

    sy = SyncConfig()
    kw = {}
    if (v := get("sync", "quadrature")) is not None:
        kw["quadrature"] = _choice("sync.quadrature", v, ("vertex", "gauss"))
    if (v := get("sync", "tol")) is not None:
        kw["tol"] = _float("sync.tol", v)
    if (v := get("sync", "max_iters")) is not None:
        kw["max_iters"] = _int("sync.max_iters", v)
    sy = replace(sy, **kw)

    ini = InitConfig()
    kw = {}
    consts, overrides = [], []
    if cp.has_section("init"):
        for key, v in cp["init"].items():
            name, _, node = key.partition(".")
            if name in FIELDS:
                vec = _vector(f"init.{key}", v)
                if node:
                    overrides.append((name, _int(f"init.{key}", node), vec))
                else:
                    consts.append((name, vec))
    kw["constants"] = tuple(sorted(consts))
    kw["overrides"] = tuple(sorted(overrides))
    if (v := get("init", "modal")) is not None:
        kw["modal"] = _choice("init.modal", v, ("none", "lowest"))
    if (v := get("init", "modal_amplitude")) is not None:
        kw["modal_amplitude"] = _float("init.modal_amplitude", v)
    if (v := get("init", "modal_field")) is not None:
        kw["modal_field"] = _choice("init.modal_field", v, ("velocity", "displacement"))
    ini = replace(ini, **kw)

    dg = DiagnosticsConfig()
    kw = {}
    for key in ("energy", "pv"):
        if (v := get("diagnostics", key)) is not None:
            kw[key] = _bool(f"diagnostics.{key}", v)
    if (v := get("diagnostics", "convergence")) is not None:
        kw["convergence"] = _choice("diagnostics.convergence", v, ("auto", "oracle", "cauchy"))
    dg = replace(dg, **kw)

    cfg = RunConfig(p, m, ts, sy, ini, dg, base_dir)
    check(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return loads(text, os.path.dirname(os.path.abspath(path)))


def check(cfg: RunConfig) -> None:
    """Static checks that need no mesh: ranges and integrator/co-energy compatibility."""
    p, m, ts, sy = cfg.problem, cfg.material, cfg.timeset, cfg.sync
    if not p.t0 < p.tf:
        raise ConfigError("problem.tf", f"interval is empty: t0={p.t0}, tf={p.tf}")
    if p.k < 1:
        raise ConfigError("problem.k", "descriptor dimension must be >= 1")
    if p.square_n < 1:
        raise ConfigError("problem.square_n", "must be >= 1")
    if p.integrator == "avi" and m.chi != "scalar":
        raise ConfigError("material.chi", "the avi integrator requires chi = scalar "
                                          f"(got {m.chi}); use integrator = sync")
    if p.integrator == "sync" and ts.policy != "uniform":
        raise ConfigError("timeset.policy", "the sync integrator needs a uniform time set")
    if m.rho <= 0:
        raise ConfigError("material.rho", "must be positive")
    if m.eta < 0:
        raise ConfigError("material.eta", "must be >= 0")
    if m.chi == "scalar" and m.rho_bar <= 0:
        raise ConfigError("material.rho_bar", "must be positive")
    if m.chi == "matrix" and m.Omega is None:
        raise ConfigError("material.Omega", "required when chi = matrix")
    if m.Q_kind == "iso" and len(m.Q_values) not in (4, 5):
        raise ConfigError("material.Q", "iso expects lam mu kappa beta [couple]")
    if ts.n < 1:
        raise ConfigError("timeset.n", "must be >= 1")
    if ts.max_ratio < 1:
        raise ConfigError("timeset.max_ratio", "must be >= 1")
    if sy.tol <= 0:
        raise ConfigError("sync.tol", "must be positive")
    if sy.max_iters < 1:
        raise ConfigError("sync.max_iters", "must be >= 1")


# -- dumping ------------------------------------------------------------------------


def dumps(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    p, m, ts, sy, ini, dg = cfg.problem, cfg.material, cfg.timeset, cfg.sync, cfg.init, cfg.diagnostics
    cp["problem"] = {
        "mesh": p.mesh, "square_n": str(p.square_n), "k": str(p.k), "output": p.output,
        "t0": _fmt(p.t0), "tf": _fmt(p.tf), "integrator": p.integrator, "seed": str(p.seed),
    }
    if p.markers:
        cp["problem"]["markers"] = " ".join(f"{s}={mk}" for s, mk in p.markers)
    mat = {"Q": " ".join([m.Q_kind] + [_fmt(x) for x in m.Q_values]), "rho": _fmt(m.rho),
           "eta": _fmt(m.eta), "chi": m.chi, "rho_bar": _fmt(m.rho_bar)}
    if m.W is not None:
        mat["W"] = _fmt_mat(m.W)
    if m.g is not None:
        mat["g"] = _fmt_vec(m.g)
    if m.w0 is not None:
        mat["w0"] = _fmt(m.w0)
    if m.Omega is not None:
        mat["Omega"] = _fmt_mat(m.Omega)
    if m.chi == "general":
        mat["chi.model"] = m.chi_model
    for name, val in m.chi_params:
        mat[f"chi.{name}"] = _fmt(val)
    if m.traction is not None:
        mat["traction"] = _fmt_vec(m.traction)
    for facet, t in m.facet_traction:
        mat["traction." + "-".join(str(i) for i in facet)] = _fmt_vec(t)
    cp["material"] = mat
    tsd = {"policy": ts.policy, "n": str(ts.n), "max_ratio": _fmt(ts.max_ratio), "mode": ts.mode}
    if ts.per_element:
        tsd["per_element"] = " ".join(str(x) for x in ts.per_element)
    if ts.max_T is not None:
        tsd["max_T"] = _fmt(ts.max_T)
    cp["timeset"] = tsd
    cp["sync"] = {"quadrature": sy.quadrature, "tol": _fmt(sy.tol), "max_iters": str(sy.max_iters)}
    ind = {name: _fmt_vec(v) for name, v in ini.constants}
    for name, node, v in ini.overrides:
        ind[f"{name}.{node}"] = _fmt_vec(v)
    ind.update(modal=ini.modal, modal_amplitude=_fmt(ini.modal_amplitude), modal_field=ini.modal_field)
    cp["init"] = ind
    cp["diagnostics"] = {"energy": str(dg.energy).lower(), "pv": str(dg.pv).lower(),
                         "convergence": dg.convergence}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- building ------------------------------------------------------------------------


@dataclass(eq=False)
class Case:
    """A configuration turned into numerical objects."""

    config: RunConfig
    mesh: meshmod.Mesh
    material: Material
    model: Model
    timeset: TimeSet
    init: State

    @property
    def output_dir(self) -> str:
        out = self.config.problem.output
        return out if os.path.isabs(out) else os.path.join(self.config.base_dir, out)

    def timeset_at(self, level: int) -> TimeSet:
        """The configured policy with the step count doubled ``level`` times."""
        return _timeset(self.config, self.mesh, level)


def build_mesh(cfg: RunConfig) -> meshmod.Mesh:
    p = cfg.problem
    try:
        if p.mesh == "square":
            return meshmod.square_mesh(p.square_n, p.k, dict(p.markers))
        path = p.mesh if os.path.isabs(p.mesh) else os.path.join(cfg.base_dir, p.mesh)
        if not os.path.exists(path):
            raise ConfigError("problem.mesh", f"file not found: {path}")
        return meshmod.read_mesh(path)
    except meshmod.MeshError as exc:
        raise ConfigError("problem.mesh", str(exc)) from None


def _elastic(m: MaterialConfig, d: int, k: int) -> ElasticForm:
    if m.Q_kind == "iso":
        return ElasticForm.isotropic(d, k, *m.Q_values)
    n = xi_size(d, k)
    if len(m.Q_values) != n * (n + 1) // 2:
        raise ConfigError("material.Q", f"lower listing needs {n * (n + 1) // 2} entries for "
                                        f"d={d}, k={k}, got {len(m.Q_values)}")
    Q = np.zeros((n, n))
    Q[np.tril_indices(n)] = m.Q_values
    return ElasticForm(Q + np.tril(Q, -1).T, d, k)


def build_material(cfg: RunConfig, mesh: meshmod.Mesh) -> Material:
    m = cfg.material
    d, k = mesh.dim, mesh.k
    e = _elastic(m, d, k)
    if m.W is not None or m.g is not None:
        W = np.asarray(m.W if m.W is not None else np.zeros((d + k, d + k)))
        g = np.asarray(m.g if m.g is not None else np.zeros(d + k))
        if W.shape != (d + k, d + k):
            raise ConfigError("material.W", f"must be {d + k}x{d + k}")
        if g.shape != (d + k,):
            raise ConfigError("material.g", f"must have {d + k} entries")
        pot = ExternalPotential(W, g, m.w0)
    else:
        pot = None
    if m.chi == "scalar":
        chi = ScalarChi(m.rho_bar, k)
    elif m.chi == "matrix":
        Om = np.asarray(m.Omega)
        if Om.shape != (k, k):
            raise ConfigError("material.Omega", f"must be {k}x{k}")
        try:
            chi = MatrixChi(Om)
        except ValueError as exc:
            raise ConfigError("material.Omega", str(exc)) from None
    else:
        try:
            chi = GENERAL_CHI_MODELS[m.chi_model](k, **dict(m.chi_params))
        except TypeError as exc:
            raise ConfigError("material.chi", str(exc)) from None
    traction = {}
    marked = [tuple(sorted(f)) for f in mesh.facets_with(meshmod.Marker.TRACTION)]
    if m.traction is not None:
        if len(m.traction) != d:
            raise ConfigError("material.traction", f"must have {d} entries")
        traction.update({f: np.asarray(m.traction) for f in marked})
    for facet, t in m.facet_traction:
        key = "material.traction." + "-".join(map(str, facet))
        if facet not in marked:
            raise ConfigError(key, "facet is not marked traction in the mesh")
        if len(t) != d:
            raise ConfigError(key, f"must have {d} entries")
        traction[facet] = np.asarray(t)
    try:
        return Material(e, chi, rho=m.rho, eta=m.eta, potential=pot, traction=traction)
    except ValueError as exc:
        raise ConfigError("material", str(exc)) from None


def _timeset(cfg: RunConfig, mesh, level: int = 0) -> TimeSet:
    ts, p = cfg.timeset, cfg.problem
    scale = 2 ** level
    per = tuple(n * scale for n in ts.per_element)
    if ts.policy == "per_element_uniform" and len(per) != mesh.n_elements:
        raise ConfigError("timeset.per_element", f"need {mesh.n_elements} step counts")
    pol = policy_from_config(ts.policy, ts.n * scale, p.seed + level, ts.max_ratio, per)
    return build(mesh, p.t0, p.tf, pol, ts.mode)


def build_init(cfg: RunConfig, model: Model) -> State:
    n, d, k = model.n, model.d, model.k
    st = State.zeros(n, d, k, cfg.problem.t0)
    arrays = dict(zip(FIELDS, (st.u, st.nu, st.u_dot, st.nu_dot)))
    width = {"u": d, "nu": k, "u_dot": d, "nu_dot": k}
    free = {"u": model.free_u, "nu": model.free_nu, "u_dot": model.free_u, "nu_dot": model.free_nu}
    for name, vec in cfg.init.constants:
        if len(vec) != width[name]:
            raise ConfigError(f"init.{name}", f"must have {width[name]} entries")
        arrays[name][:] = np.where(free[name], np.asarray(vec), 0.0)
    for name, node, vec in cfg.init.overrides:
        key = f"init.{name}.{node}"
        if not 0 <= node < n:
            raise ConfigError(key, f"node index out of range (mesh has {n} nodes)")
        if len(vec) != width[name]:
            raise ConfigError(key, f"must have {width[name]} entries")
        if np.any(np.asarray(vec) != 0) and not np.all(free[name][node]):
            raise ConfigError(key, "node is constrained for this field")
        arrays[name][node] = vec
    if cfg.init.modal == "lowest":
        if not model.material.chi.quadratic:
            raise ConfigError("init.modal", "modal excitation needs a quadratic co-energy")
        from .oracle import assemble

        sys = assemble(model=model)
        omega, phi = sys.modes()
        nz = np.flatnonzero(omega > 1e-8 * max(1.0, omega.max()))
        if nz.size == 0:
            raise ConfigError("init.modal", "system has no nonzero eigenmode")
        x = np.zeros(model.ndof)
        x[model.free_dofs] = cfg.init.modal_amplitude * phi[:, nz[0]]
        mu, mnu = model.unpack(x)
        if cfg.init.modal_field == "velocity":
            st.u_dot[:] += mu
            st.nu_dot[:] += mnu
        else:
            st.u[:] += mu
            st.nu[:] += mnu
    return st


def build_case(cfg: RunConfig) -> Case:
    mesh = build_mesh(cfg)
    material = build_material(cfg, mesh)
    model = Model(mesh, material)
    theta = _timeset(cfg, mesh)
    if cfg.problem.integrator == "sync" and not theta.synchronous:
        raise ConfigError("timeset", "the sync integrator needs identical elemental time sets")
    return Case(cfg, mesh, material, model, theta, build_init(cfg, model))
