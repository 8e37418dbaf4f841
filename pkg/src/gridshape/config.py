"""Scenario files: TOML or JSON with unit-suffixed keys and a versioned schema.

Every key carries its unit (``h_s``, ``alpha_g_pu``, ``rocof_hz_s`` ...).  The
disturbance may be given per unit (``dp_pu``) or in GW (``dp_gw``) together
with ``system.base_gva``.  Errors name the offending field path.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Union

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controllers import ControllerKind, TuningTargets
from .errors import ConfigError, ParameterError
from .plant import FirstOrder, Hydro, IEEEG1, AreaParameters, MachineParameters, TwoAreaModel
from .sim import DisturbanceSpec

SCHEMA_VERSION = 1
CONTROLLER_KINDS = ("none",) + tuple(k.value for k in ControllerKind)
ALLOCATION_POLICIES = ("proportional", "uniform", "deficit")
OVERRIDE_KEYS = ("m_v", "alpha_b", "a", "b")


@dataclass(frozen=True)
class MachineFleet:
    machines: tuple[MachineParameters, ...]
    alpha_l: float = 0.0
    f0_hz: float = 50.0


System = Union[AreaParameters, MachineFleet, TwoAreaModel]


@dataclass(frozen=True)
class TargetSpec:
    """Design targets in reporting units, kept verbatim for exact round trips."""

    dp_pu: float
    steady_state_mhz: float
    rocof_hz_s: float

    def resolve(self, f0_hz: float) -> TuningTargets:
        return TuningTargets.from_hz(self.dp_pu, self.steady_state_mhz, self.rocof_hz_s, f0_hz)


@dataclass(frozen=True)
class ControllerRequest:
    kind: str = "none"
    overrides: dict = field(default_factory=dict)
    filter_hz: float = 5.0
    filtered: bool = True
    reduction_order: int = 0
    allocation: str = "proportional"
    thresholds: tuple[float, float] | None = None  # deficit policy: (h_min [s], alpha_min [pu]) per unit rating


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 1e-3
    horizon: float = 60.0
    output_dt: float = 0.01
    linear: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    system: System
    disturbance: DisturbanceSpec
    targets: TargetSpec | None = None
    controller: ControllerRequest = field(default_factory=ControllerRequest)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_dir: str = "out"
    base_gva: float | None = None
    description: str = ""

    @property
    def f0_hz(self) -> float:
        if isinstance(self.system, TwoAreaModel):
            return self.system.areas[0].f0_hz
        return self.system.f0_hz

    def tuning_targets(self) -> TuningTargets | None:
        return None if self.targets is None else self.targets.resolve(self.f0_hz)

    def replace(self, **changes) -> "Scenario":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Scenario(**kw)


# -- parsing helpers -----------------------------------------------------------


class _Section:
    """Dict view that tracks consumed keys and reports full field paths."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", f"expected a table, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def get(self, key, kind, default=...):
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise ConfigError(self._p(key), "required field is missing")
            return default
        v = self.data[key]
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(self._p(key), f"expected a number, got {v!r}")
            v = float(v)
            if not math.isfinite(v):
                raise ConfigError(self._p(key), f"must be finite, got {v!r}")
        elif kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(self._p(key), f"expected an integer, got {v!r}")
        elif kind is bool:
            if not isinstance(v, bool):
                raise ConfigError(self._p(key), f"expected true/false, got {v!r}")
        elif kind is str:
            if not isinstance(v, str):
                raise ConfigError(self._p(key), f"expected a string, got {v!r}")
        elif kind is list:
            if not isinstance(v, list):
                raise ConfigError(self._p(key), f"expected an array, got {v!r}")
        return v

    def sub(self, key, required=True):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(self._p(key), "required table is missing")
            return None
        return _Section(self.data[key], self._p(key))

    def items(self, key):
        return [_Section(item, f"{self._p(key)}[{i}]") for i, item in enumerate(self.get(key, list))]

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(self._p(extra[0]), f"unknown field (allowed: {', '.join(sorted(self.used))})")


def _build(path, fn, *args, **kwargs):
    """Run a constructor, re-raising parameter errors with the config path."""
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except ParameterError as exc:
        raise ConfigError(f"{path}.{exc.field}", str(exc).split(": ", 1)[-1]) from None


_AREA_KEYS = {"H": "h_s", "tau_t": "tau_t_s", "alpha_g": "alpha_g_pu", "alpha_l": "alpha_l_pu",
              "k_i": "k_i_pu_s", "f0_hz": "f0_hz"}


def _area(sec: _Section) -> AreaParameters:
    kw = dict(
        H=sec.get("h_s", float),
        tau_t=sec.get("tau_t_s", float),
        alpha_g=sec.get("alpha_g_pu", float),
        alpha_l=sec.get("alpha_l_pu", float, 0.0),
        k_i=sec.get("k_i_pu_s", float, 0.0),
        f0_hz=sec.get("f0_hz", float, 50.0),
    )
    try:
        return AreaParameters(**kw)
    except ParameterError as exc:
        raise ConfigError(sec._p(_AREA_KEYS.get(exc.field, exc.field)), str(exc).split(": ", 1)[-1]) from None


def _governor(sec: _Section):
    kind = sec.get("kind", str)
    if kind == "first_order":
        g = _build(sec.path, FirstOrder, sec.get("tau_t_s", float))
    elif kind == "ieeeg1":
        d = IEEEG1()
        g = _build(sec.path, IEEEG1, k1=sec.get("k1", float, d.k1), k3=sec.get("k3", float, d.k3),
                   t1=sec.get("t1_s", float, d.t1), t3=sec.get("t3_s", float, d.t3),
                   t4=sec.get("t4_s", float, d.t4), t5=sec.get("t5_s", float, d.t5))
    elif kind == "hydro":
        g = _build(sec.path, Hydro, sec.get("t_w_s", float, 1.0))
    else:
        raise ConfigError(sec._p("kind"), f"unknown governor {kind!r} (first_order, ieeeg1, hydro)")
    sec.finish()
    return g


def _system(sec: _Section):
    kind = sec.get("kind", str, "area")
    base = sec.get("base_gva", float, None)
    if base is not None and not base > 0:
        raise ConfigError(sec._p("base_gva"), "must be > 0")
    if kind == "area":
        system = _area(sec)
    elif kind == "machines":
        machines = []
        for m in sec.items("machines"):
            gov = _governor(m.sub("governor"))
            machines.append(_build(m.path, MachineParameters, H=m.get("h_s", float),
                                   alpha_g=m.get("alpha_g_pu", float), governor=gov,
                                   rating=m.get("rating_pu", float, 1.0)))
            m.finish()
        if not machines:
            raise ConfigError(sec._p("machines"), "fleet is empty")
        alpha_l = sec.get("alpha_l_pu", float, 0.0)
        f0 = sec.get("f0_hz", float, 50.0)
        if alpha_l < 0:
            raise ConfigError(sec._p("alpha_l_pu"), "must be >= 0")
        if f0 not in (50.0, 60.0):
            raise ConfigError(sec._p("f0_hz"), "must be 50 or 60")
        system = MachineFleet(tuple(machines), alpha_l, f0)
    elif kind == "two_area":
        areas = []
        for a in sec.items("areas"):
            areas.append(_area(a))
            a.finish()
        if len(areas) != 2:
            raise ConfigError(sec._p("areas"), f"exactly two areas required, got {len(areas)}")
        p0_m = sec.get("p0_m_pu", list)
        p0_l = sec.get("p0_l_pu", list)
        for key, v in (("p0_m_pu", p0_m), ("p0_l_pu", p0_l)):
            if len(v) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(sec._p(key), "expected two numbers")
        system = _build(sec.path, TwoAreaModel, areas=tuple(areas), p12_max=sec.get("p12_max_pu", float),
                        p0_m=tuple(float(x) for x in p0_m), p0_l=tuple(float(x) for x in p0_l),
                        agc_enabled=sec.get("agc", bool, False))
    else:
        raise ConfigError(sec._p("kind"), f"unknown system kind {kind!r} (area, machines, two_area)")
    sec.finish()
    return system, base


def scenario_from_dict(data: dict, source: str = "<dict>") -> Scenario:
    """Validate a parsed document and build a :class:`Scenario`."""
    root = _Section(data, "")
    version = root.get("schema_version", int)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    name = root.get("name", str, Path(source).stem)
    description = root.get("description", str, "")
    system, base = _system(root.sub("system"))
    n_areas = 2 if isinstance(system, TwoAreaModel) else 1

    d = root.sub("disturbance")
    if d.has("dp_pu") and d.has("dp_gw"):
        raise ConfigError("disturbance.dp_gw", "give either dp_pu or dp_gw, not both")
    if d.has("dp_gw"):
        if base is None:
            raise ConfigError("disturbance.dp_gw", "requires system.base_gva")
        dp = d.get("dp_gw", float) / base
    else:
        dp = d.get("dp_pu", float)
    area = d.get("area", int, 1)
    if not 1 <= area <= n_areas:
        raise ConfigError("disturbance.area", f"must be in 1..{n_areas}, got {area}")
    dist = _build("disturbance", DisturbanceSpec, dp, area - 1, d.get("start_s", float, 1.0),
                  d.get("kind", str, "step"))
    d.finish()

    targets = None
    t = root.sub("targets", required=False)
    if t is not None:
        f0 = system.areas[0].f0_hz if isinstance(system, TwoAreaModel) else system.f0_hz
        t_dp = t.get("dp_pu", float, dist.magnitude)
        targets = TargetSpec(t_dp, t.get("steady_state_mhz", float), t.get("rocof_hz_s", float))
        try:
            targets.resolve(f0)
        except ParameterError as exc:
            key = {"dp": "dp_pu", "domega_d": "steady_state_mhz", "rocof_d": "rocof_hz_s"}[exc.field]
            raise ConfigError(f"targets.{key}", str(exc).split(": ", 1)[-1]) from None
        t.finish()

    controller = ControllerRequest()
    c = root.sub("controller", required=False)
    if c is not None:
        kind = c.get("kind", str, "none")
        if kind not in CONTROLLER_KINDS:
            raise ConfigError("controller.kind", f"unknown kind {kind!r} ({', '.join(CONTROLLER_KINDS)})")
        overrides = {}
        o = c.sub("overrides", required=False)
        if o is not None:
            for key in OVERRIDE_KEYS:
                if o.has(key):
                    overrides[key] = o.get(key, float)
            o.finish()
        allocation = c.get("allocation", str, "proportional")
        if allocation not in ALLOCATION_POLICIES:
            raise ConfigError("controller.allocation", f"unknown policy {allocation!r}")
        order = c.get("reduction_order", int, 0)
        if order < 0:
            raise ConfigError("controller.reduction_order", "must be >= 0")
        fhz = c.get("filter_hz", float, 5.0)
        if not fhz > 0:
            raise ConfigError("controller.filter_hz", "must be > 0")
        thresholds = None
        if c.has("deficit_h_min_s") or c.has("deficit_alpha_min_pu"):
            if allocation != "deficit":
                raise ConfigError("controller.allocation", "deficit thresholds need allocation = 'deficit'")
            thresholds = (c.get("deficit_h_min_s", float), c.get("deficit_alpha_min_pu", float))
            if min(thresholds) < 0:
                raise ConfigError("controller.deficit_h_min_s", "thresholds must be >= 0")
        controller = ControllerRequest(kind, overrides, fhz, c.get("filtered", bool, True), order, allocation,
                                       thresholds)
        c.finish()
        if kind == "per_machine" and not isinstance(system, MachineFleet):
            raise ConfigError("controller.kind", "per_machine requires system.kind = 'machines'")
        if kind != "none" and targets is None and not _overrides_complete(kind, overrides):
            raise ConfigError("targets", f"controller {kind!r} needs [targets] or explicit overrides")

    solver = SolverSettings()
    s = root.sub("solver", required=False)
    if s is not None:
        solver = SolverSettings(s.get("dt_s", float, solver.dt), s.get("horizon_s", float, solver.horizon),
                                s.get("output_dt_s", float, solver.output_dt), s.get("linear", bool, False))
        for key, v in (("dt_s", solver.dt), ("horizon_s", solver.horizon), ("output_dt_s", solver.output_dt)):
            if not v > 0:
                raise ConfigError(f"solver.{key}", "must be > 0")
        if solver.horizon < solver.dt:
            raise ConfigError("solver.horizon_s", "must be >= dt_s")
        s.finish()

    out = root.sub("output", required=False)
    output_dir = "out"
    if out is not None:
        output_dir = out.get("dir", str, output_dir)
        out.finish()
    root.finish()
    return Scenario(name, system, dist, targets, controller, solver, output_dir, base, description)


def _overrides_complete(kind, overrides):
    need = {"virtual_inertia": ("alpha_b",), "frequency_shaping": ("a", "b"), "idroop": ("alpha_b",)}
    return kind in need and all(k in overrides for k in need[kind])


def load_scenario(path) -> Scenario:
    """Read a ``.toml`` or ``.json`` scenario file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from None
    return scenario_from_dict(data, str(path))


# -- serialization -----------------------------------------------------------------


def _area_dict(a: AreaParameters) -> dict:
    return {"h_s": a.H, "tau_t_s": a.tau_t, "alpha_g_pu": a.alpha_g, "alpha_l_pu": a.alpha_l,
            "k_i_pu_s": a.k_i, "f0_hz": a.f0_hz}


def _governor_dict(g) -> dict:
    if isinstance(g, FirstOrder):
        return {"kind": "first_order", "tau_t_s": g.tau_t}
    if isinstance(g, IEEEG1):
        return {"kind": "ieeeg1", "k1": g.k1, "k3": g.k3, "t1_s": g.t1, "t3_s": g.t3, "t4_s": g.t4, "t5_s": g.t5}
    return {"kind": "hydro", "t_w_s": g.t_w}


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    """Inverse of :func:`scenario_from_dict` (disturbance always in per unit)."""
    sysd: dict[str, Any]
    if isinstance(sc.system, AreaParameters):
        sysd = {"kind": "area", **_area_dict(sc.system)}
    elif isinstance(sc.system, MachineFleet):
        sysd = {"kind": "machines", "alpha_l_pu": sc.system.alpha_l, "f0_hz": sc.system.f0_hz,
                "machines": [{"h_s": m.H, "alpha_g_pu": m.alpha_g, "rating_pu": m.rating,
                              "governor": _governor_dict(m.governor)} for m in sc.system.machines]}
    else:
        m = sc.system
        sysd = {"kind": "two_area", "p12_max_pu": m.p12_max, "p0_m_pu": list(m.p0_m), "p0_l_pu": list(m.p0_l),
                "agc": m.agc_enabled, "areas": [_area_dict(a) for a in m.areas]}
    if sc.base_gva is not None:
        sysd["base_gva"] = sc.base_gva
    out: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "name": sc.name}
    if sc.description:
        out["description"] = sc.description
    out["system"] = sysd
    out["disturbance"] = {"dp_pu": sc.disturbance.magnitude, "area": sc.disturbance.area_index + 1,
                          "start_s": sc.disturbance.start_time, "kind": sc.disturbance.kind}
    if sc.targets is not None:
        out["targets"] = {"dp_pu": sc.targets.dp_pu, "steady_state_mhz": sc.targets.steady_state_mhz,
                          "rocof_hz_s": sc.targets.rocof_hz_s}
    c = sc.controller
    out["controller"] = {"kind": c.kind, "filter_hz": c.filter_hz, "filtered": c.filtered,
                         "reduction_order": c.reduction_order, "allocation": c.allocation}
    if c.overrides:
        out["controller"]["overrides"] = dict(c.overrides)
    if c.thresholds is not None:
        out["controller"]["deficit_h_min_s"], out["controller"]["deficit_alpha_min_pu"] = c.thresholds
    s = sc.solver
    out["solver"] = {"dt_s": s.dt, "horizon_s": s.horizon, "output_dt_s": s.output_dt, "linear": s.linear}
    out["output"] = {"dir": sc.output_dir}
    return out


def dump_scenario(sc: Scenario, path=None) -> str:
    """Serialize to TOML; writes ``path`` when given."""
    text = tomli_w.dumps(scenario_to_dict(sc))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def shipped_scenarios() -> dict[str, Path]:
    """Scenario files bundled with the package, keyed by stem."""
    d = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(d.glob("*.toml"))}
