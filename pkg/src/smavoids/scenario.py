"""Scenario documents: schema, validation and serialization.

A scenario is a YAML mapping.  Only ``mesh`` and ``time.t_end`` are required;
every other field falls back to the normalized defaults.  Unknown keys are
errors.  See ``docs/scenario_schema.md`` for the full field list.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from .constitutive import MaterialParams
from .convex import in_C
from .discretization import ConfigurationError, Mesh1D, build_mesh
from .solver import Loads, SolverConfig, StateSnapshot

__all__ = [
    "ScenarioError",
    "TimeSeries",
    "Profile",
    "MeshSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
]


class ScenarioError(ValueError):
    """Validation failure carrying one message per offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class TimeSeries:
    """Piecewise-linear function of time, constant beyond the end breakpoints."""

    points: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    @classmethod
    def constant(cls, v: float) -> "TimeSeries":
        return cls(((0.0, float(v)),))

    def __call__(self, t: float) -> float:
        ts = [p[0] for p in self.points]
        vs = [p[1] for p in self.points]
        return float(np.interp(t, ts, vs))

    def shifted(self, delta: float) -> "TimeSeries":
        return TimeSeries(tuple((t, v + delta) for t, v in self.points))

    def to_doc(self):
        if len(self.points) == 1 and self.points[0][0] == 0.0:
            return self.points[0][1]
        return [list(p) for p in self.points]


@dataclass(frozen=True)
class Profile:
    """Piecewise-linear function of position (a constant when given one point)."""

    points: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    @classmethod
    def constant(cls, v: float) -> "Profile":
        return cls(((0.0, float(v)),))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.interp(x, [p[0] for p in self.points], [p[1] for p in self.points])

    def to_doc(self):
        if len(self.points) == 1 and self.points[0][0] == 0.0:
            return self.points[0][1]
        return {"points": [list(p) for p in self.points]}


@dataclass(frozen=True)
class MeshSpec:
    length: float = 1.0
    n_elements: int = 32
    gamma0_side: str = "left"


@dataclass(frozen=True)
class Sources:
    f: TimeSeries = field(default_factory=TimeSeries)
    g: TimeSeries = field(default_factory=TimeSeries)
    R: TimeSeries = field(default_factory=TimeSeries)
    Pi_left: TimeSeries = field(default_factory=TimeSeries)
    Pi_right: TimeSeries = field(default_factory=TimeSeries)


@dataclass(frozen=True)
class Scenario:
    mesh_spec: MeshSpec
    material: MaterialParams
    u0: Profile
    theta_init: Profile
    beta0: tuple[Profile, Profile, Profile]
    sources: Sources
    cfg: SolverConfig
    probe_x: float | None = None

    def mesh(self) -> Mesh1D:
        ms = self.mesh_spec
        return build_mesh(ms.length, ms.n_elements, ms.gamma0_side)

    def loads_at(self, t: float) -> Loads:
        s = self.sources
        return Loads(s.f(t), s.g(t), s.R(t), s.Pi_left(t), s.Pi_right(t))

    def initial_state(self, mesh: Mesh1D | None = None) -> StateSnapshot:
        mesh = mesh or self.mesh()
        x = mesh.nodes
        u = self.u0(x)
        u[list(mesh.gamma0_nodes)] = 0.0
        theta = self.theta_init(x)
        beta = np.column_stack([b(x) for b in self.beta0])
        return StateSnapshot(0.0, u, np.log(theta), beta, np.zeros(mesh.n_elements))

    def with_cfg(self, **changes) -> "Scenario":
        return replace(self, cfg=replace(self.cfg, **changes))

    @property
    def probe_node(self) -> int:
        mesh = self.mesh()
        x = 0.5 * mesh.length if self.probe_x is None else self.probe_x
        return int(np.argmin(np.abs(mesh.nodes - x)))


# --- schema -----------------------------------------------------------------

_MATERIAL_KEYS = {
    "K": "K", "C_bar": "C_bar", "l_a": "l_a", "theta_0": "theta_0", "theta_c": "theta_c",
    "tau_bar": "tau_bar", "c_visc": "c_visc", "k_grad": "k_grad", "upsilon": "upsilon", "lambda": "lam",
}
_SCHEMA = {
    "mesh": {"length", "n_elements", "gamma0_side"},
    "material": set(_MATERIAL_KEYS),
    "initial": {"u", "theta", "beta"},
    "sources": {"f", "g", "R", "Pi_left", "Pi_right"},
    "time": {"t_end", "dt"},
    "solver": {"epsilon", "fp_tol", "fp_max_iter", "picard_relaxation", "inner_max_iter", "max_halvings"},
    "output": {"probe_x"},
}
DEFAULT_EPSILON = 1e-2
DEFAULT_DT = 5e-3


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _line_map(text: str) -> dict[tuple, int]:
    """Map key paths to 1-based source lines."""
    lines: dict[tuple, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = (*path, k.value)
                lines[key] = k.start_mark.line + 1
                walk(v, key)

    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


class _Collector:
    def __init__(self, lines):
        self.lines = lines
        self.errors: list[str] = []

    def add(self, path: tuple, msg: str):
        line = None
        for k in range(len(path), 0, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        where = ".".join(str(p) for p in path)
        self.errors.append(f"line {line}: {where}: {msg}" if line else f"{where}: {msg}")

    def number(self, doc, path, default=None, integer=False):
        v = doc.get(path[-1], default) if isinstance(doc, dict) else default
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(path, f"expected a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.add(path, f"expected an integer, got {v!r}")
            return default
        if not math.isfinite(v):
            self.add(path, "must be finite")
            return default
        return int(v) if integer else float(v)


def _series(c: _Collector, value, path) -> TimeSeries:
    if value is None:
        return TimeSeries()
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return TimeSeries.constant(value)
    pts = _pairs(c, value, path, "time")
    return TimeSeries(pts) if pts else TimeSeries()


def _profile(c: _Collector, value, path) -> Profile:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Profile.constant(value)
    if isinstance(value, dict):
        extra = set(value) - {"points"}
        for k in sorted(extra):
            c.add((*path, k), "unknown key")
        pts = _pairs(c, value.get("points"), (*path, "points"), "position")
        return Profile(pts) if pts else Profile()
    c.add(path, f"expected a number or {{points: [[x, v], ...]}}, got {value!r}")
    return Profile()


def _pairs(c, value, path, axis):
    if not isinstance(value, list) or not value:
        c.add(path, f"expected a nonempty list of [{axis}, value] pairs")
        return None
    pts = []
    for i, item in enumerate(value):
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in item)):
            c.add(path, f"entry {i} must be a pair of finite numbers, got {item!r}")
            return None
        pts.append((float(item[0]), float(item[1])))
    if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
        c.add(path, f"{axis} breakpoints must be strictly increasing")
        return None
    return tuple(pts)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario document.

    Raises :class:`ScenarioError` listing every problem found, with source
    lines where available.
    """
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ScenarioError([f"{loc}YAML parse error: {getattr(exc, 'problem', exc)}"]) from None
    c = _Collector(_line_map(text))
    if not isinstance(doc, dict):
        raise ScenarioError(["document must be a mapping with at least 'mesh' and 'time.t_end'"])

    for key in doc:
        if key not in _SCHEMA:
            c.add((key,), "unknown section")
        elif doc[key] is not None and not isinstance(doc[key], dict):
            c.add((key,), "section must be a mapping")
        else:
            for sub in doc[key] or {}:
                if sub not in _SCHEMA[key]:
                    c.add((key, sub), "unknown key")
    sec = {k: (doc.get(k) if isinstance(doc.get(k), dict) else {}) for k in _SCHEMA}

    if "mesh" not in doc:
        c.add(("mesh",), "required section missing")
    ms = sec["mesh"]
    mesh_spec = MeshSpec(
        c.number(ms, ("mesh", "length"), 1.0),
        c.number(ms, ("mesh", "n_elements"), 32, integer=True),
        ms.get("gamma0_side", "left"),
    )
    try:
        build_mesh(mesh_spec.length, mesh_spec.n_elements, mesh_spec.gamma0_side)
    except ConfigurationError as exc:
        c.add(("mesh",), str(exc))

    mat_doc = sec["material"]
    kw = {}
    for key, attr in _MATERIAL_KEYS.items():
        v = c.number(mat_doc, ("material", key))
        if v is not None:
            kw[attr] = v
    if "l_a" not in kw:
        kw["l_a"] = kw.get("theta_0", MaterialParams.theta_0)  # keep l_a/theta_0 = 1
    material = MaterialParams.unchecked(**kw)
    inverse = {v: k for k, v in _MATERIAL_KEYS.items()}
    for msg in material.validate():
        attr = msg.split()[0]
        c.add(("material", inverse.get(attr, attr)), _explain(msg))
    if not material.c_visc > 0:
        c.add(("material", "c_visc"), "must be positive: the phase viscosity makes each implicit phase step SPD")
    if not material.C_bar > 0:
        c.add(("material", "C_bar"), "must be positive: the entropy equation is parabolic only for C_bar > 0")

    tdoc = sec["time"]
    t_end = c.number(tdoc, ("time", "t_end"))
    if t_end is None:
        c.add(("time", "t_end"), "required field missing")
        t_end = 1.0
    sdoc = sec["solver"]
    cfg = SolverConfig(
        dt=c.number(tdoc, ("time", "dt"), DEFAULT_DT),
        t_end=t_end,
        epsilon=c.number(sdoc, ("solver", "epsilon"), DEFAULT_EPSILON),
        fp_tol=c.number(sdoc, ("solver", "fp_tol"), SolverConfig.fp_tol),
        fp_max_iter=c.number(sdoc, ("solver", "fp_max_iter"), SolverConfig.fp_max_iter, integer=True),
        picard_relaxation=c.number(sdoc, ("solver", "picard_relaxation"), SolverConfig.picard_relaxation),
        inner_max_iter=c.number(sdoc, ("solver", "inner_max_iter"), SolverConfig.inner_max_iter, integer=True),
        max_halvings=c.number(sdoc, ("solver", "max_halvings"), SolverConfig.max_halvings, integer=True),
    )
    for msg in cfg.validate():
        key = msg.split()[0]
        c.add(("time" if key in ("dt", "t_end") else "solver", key), msg.split(" ", 1)[1])

    idoc = sec["initial"]
    u0 = _profile(c, idoc.get("u", 0.0), ("initial", "u"))
    theta = _profile(c, idoc.get("theta", material.theta_0), ("initial", "theta"))
    bdoc = idoc.get("beta", [1.0 / 3, 1.0 / 3, 1.0 / 3])
    if not isinstance(bdoc, list) or len(bdoc) != 3:
        c.add(("initial", "beta"), "expected a list of three profiles [beta1, beta2, beta3]")
        bdoc = [0.0, 0.0, 0.0]
    beta0 = tuple(_profile(c, b, ("initial", "beta", i + 1)) for i, b in enumerate(bdoc))

    srcdoc = sec["sources"]
    sources = Sources(**{k: _series(c, srcdoc.get(k), ("sources", k)) for k in _SCHEMA["sources"]})
    probe = c.number(sec["output"], ("output", "probe_x"))

    scen = Scenario(mesh_spec, material, u0, theta, beta0, sources, cfg, probe)
    if not c.errors:
        _validate_initial(scen, c)
    if c.errors:
        raise ScenarioError(c.errors)
    return scen


def _explain(msg: str) -> str:
    if msg.startswith("tau_bar"):
        return "must be <= 0: the stress-temperature slope of the martensite variants is nonpositive"
    if msg.startswith("theta_c"):
        return "must exceed theta_0: the coupling critical temperature lies above phase equilibrium"
    return msg.split(" ", 1)[1]


def _validate_initial(scen: Scenario, c: _Collector):
    mesh = scen.mesh()
    x = mesh.nodes
    theta = scen.theta_init(x)
    for j in np.flatnonzero(~(theta > 0))[:10]:
        c.add(("initial", "theta"),
              f"theta0 must be positive: entropy formulation requires theta in the image of exp "
              f"(node {j}, x = {x[j]:.6g}, theta = {theta[j]:.6g})")
    beta = np.column_stack([b(x) for b in scen.beta0])
    for j in np.flatnonzero(~in_C(beta))[:10]:
        b = beta[j]
        why = (f"sum {b.sum():.6g} > 1 violates b1 + b2 + b3 <= 1" if b.sum() > 1
               else "fractions must lie in [0, 1]")
        c.add(("initial", "beta"), f"node {j}, x = {x[j]:.6g}: beta = ({b[0]:.6g}, {b[1]:.6g}, {b[2]:.6g}) not in C: {why}")
    s = beta.sum(axis=1)
    if np.any(np.abs(s - 1.0) > 1e-12):
        warnings.warn(
            f"initial fractions do not sum to 1 (range [{s.min():.6g}, {s.max():.6g}]); "
            "voids are present initially, which the scheme allows",
            stacklevel=3,
        )


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def scenario_to_doc(s: Scenario) -> dict:
    mat = {key: getattr(s.material, attr) for key, attr in _MATERIAL_KEYS.items()}
    doc = {
        "mesh": asdict(s.mesh_spec),
        "material": mat,
        "initial": {
            "u": s.u0.to_doc(),
            "theta": s.theta_init.to_doc(),
            "beta": [b.to_doc() for b in s.beta0],
        },
        "sources": {k: getattr(s.sources, k).to_doc() for k in ("f", "g", "R", "Pi_left", "Pi_right")},
        "time": {"t_end": s.cfg.t_end, "dt": s.cfg.dt},
        "solver": {
            "epsilon": s.cfg.epsilon,
            "fp_tol": s.cfg.fp_tol,
            "fp_max_iter": s.cfg.fp_max_iter,
            "picard_relaxation": s.cfg.picard_relaxation,
            "inner_max_iter": s.cfg.inner_max_iter,
            "max_halvings": s.cfg.max_halvings,
        },
    }
    if s.probe_x is not None:
        doc["output"] = {"probe_x": s.probe_x}
    return doc


class _Dumper(yaml.SafeDumper):
    pass


def _float_repr(dumper, value):
    # repr() round-trips binary64 exactly; YAML needs a dot or exponent to keep floats
    text = repr(value)
    if text in ("inf", "-inf", "nan"):
        text = {"inf": ".inf", "-inf": "-.inf", "nan": ".nan"}[text]
    elif "." not in text and "e" not in text:
        text += ".0"
    elif "e" in text and "." not in text:
        mant, exp = text.split("e")
        text = f"{mant}.0e{exp}"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _float_repr)


def serialize_scenario(s: Scenario) -> str:
    return yaml.dump(scenario_to_doc(s), Dumper=_Dumper, sort_keys=False, default_flow_style=None)
