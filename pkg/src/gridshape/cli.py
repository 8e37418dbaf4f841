"""Command-line driver: ``synth``, ``simulate``, ``sweep`` and ``plot``.

Exit codes: 0 success, 2 configuration or parameter error, 3 synthesis
infeasible, 4 simulation divergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import controllers as ctl
from .config import MachineFleet, Scenario, load_scenario, shipped_scenarios
from .errors import (ConfigError, DivergenceError, GridShapeError, HorizonTooShortError, InstabilityError,
                     MissingSignalError, ParameterError, SynthesisError)
from .lti import RationalTransfer, Trajectory, closed_loop
from .metrics import MetricsReport, analyze_trajectory, predict_metrics
from .plant import (AreaParameters, TwoAreaModel, aggregate_multi_machine, area_state_space,
                    multi_machine_state_space, open_loop_plant)
from .report import emit_plot, plot_columns, trajectory_table, write_csv, write_json
from .sim import simulate_closed_loop, simulate_two_area

SWEEP_PARAMS = {"m_v": ("virtual_inertia",), "alpha_b": ("virtual_inertia", "idroop"), "a": ("frequency_shaping",),
                "b": ("frequency_shaping",)}
METRIC_FIELDS = [f.name for f in fields(MetricsReport)]


@dataclass
class Synthesis:
    """Controllers for a scenario: one spec per area or per machine."""

    specs: list
    case_id: int | None = None
    predicted: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "predicted": self.predicted,
                "controllers": [s.to_dict() if s is not None else None for s in self.specs]}


@dataclass
class RunResult:
    scenario: Scenario
    synthesis: Synthesis
    trajectory: Trajectory
    metrics: MetricsReport
    extra: dict = field(default_factory=dict)


# -- synthesis -------------------------------------------------------------------


def _area_law(sc: Scenario, area: AreaParameters, dp: float):
    req = sc.controller
    ov = req.overrides
    targets = sc.tuning_targets()
    if req.kind == "none":
        return None, None
    if req.kind == "virtual_inertia":
        alpha_b = ov["alpha_b"] if "alpha_b" in ov else ctl.vi_tune(targets, area).alpha_b
        m_v = ov["m_v"] if "m_v" in ov else ctl.vi_min_inertia(area, alpha_b)
        return ctl.vi_controller(m_v, alpha_b, req.filter_hz), None
    if req.kind == "frequency_shaping":
        tuned = ctl.fs_tune(targets, area) if targets is not None else None
        a = ov.get("a", tuned.a if tuned else None)
        b = ov.get("b", tuned.b if tuned else None)
        case = ctl.fs_case(a, b, area)
        return ctl.fs_controller(ctl.FsTuning(a, b, case), area, req.filter_hz), case
    if req.kind == "idroop":
        alpha_b = ov["alpha_b"] if "alpha_b" in ov else max(dp / abs(targets.domega_d) - area.alpha_g, 0.0)
        return ctl.idroop_controller(area, alpha_b, req.filter_hz), None
    raise ConfigError("controller.kind", f"{req.kind!r} is not available for single areas")


def _check_stable(g: RationalTransfer, law: RationalTransfer | None, what: str):
    h = g if law is None else closed_loop(g, law)
    poles = h.poles()
    if poles.size and np.max(poles.real) >= 0.0:
        raise InstabilityError(f"{what}: closed loop has a pole at {poles[np.argmax(poles.real)]:.4g}")
    return h


def synthesize(sc: Scenario) -> Synthesis:
    """Design the storage laws requested by ``sc`` and predict their metrics."""
    f0 = sc.f0_hz
    dp = sc.disturbance.magnitude
    system = sc.system
    if isinstance(system, AreaParameters):
        spec, case = _area_law(sc, system, dp)
        g_full = open_loop_plant(system, include_load_damping=True, include_secondary=True)
        _check_stable(g_full, spec.tf_filtered if spec else None, "filtered loop")
        g = open_loop_plant(system)
        if spec is None:
            h = g
        elif spec.kind is ctl.ControllerKind.IDROOP or spec.kind is ctl.ControllerKind.FREQUENCY_SHAPING:
            h = ctl.shaped_loop(spec, system)
        else:
            h = closed_loop(g, spec.tf)
        ss, rocof = predict_metrics(h, dp, f0)
        return Synthesis([spec] if spec else [], case, {"steady_state_mhz": ss, "rocof_hz_s": rocof})
    if isinstance(system, TwoAreaModel):
        specs, cases, pred = [], [], {}
        for k, area in enumerate(system.areas):
            spec, case = _area_law(sc, area, dp)
            specs.append(spec)
            cases.append(case)
            if spec is not None:
                g_full = open_loop_plant(area, include_load_damping=True)
                _check_stable(g_full, spec.tf_filtered, f"area {k + 1} filtered loop")
            h = open_loop_plant(area)
            if spec is not None:
                h = ctl.shaped_loop(spec, area) if spec.kind is not ctl.ControllerKind.VIRTUAL_INERTIA \
                    else closed_loop(h, spec.tf)
            ss, rocof = predict_metrics(h, dp, f0)
            pred[f"area_{k + 1}"] = {"steady_state_mhz": ss, "rocof_hz_s": rocof}
        case = cases[sc.disturbance.area_index]
        return Synthesis(specs if any(s is not None for s in specs) else [], case, pred)
    # machine fleet
    req = sc.controller
    g = aggregate_multi_machine(system.machines)
    if req.kind == "none":
        ss, rocof = predict_metrics(g, dp, f0)
        return Synthesis([], None, {"steady_state_mhz": ss, "rocof_hz_s": rocof})
    if req.kind != "per_machine":
        raise ConfigError("controller.kind", "machine fleets support 'per_machine' or 'none'")
    if req.overrides:
        raise ConfigError("controller.overrides", "per_machine allocation is driven by [targets] only")
    targets = sc.tuning_targets()
    shares = ctl.mm_allocate(targets, system.machines, req.allocation, req.thresholds)
    specs = [ctl.mm_controller(m, mi, ai, req.reduction_order, req.filter_hz)
             for m, (mi, ai) in zip(system.machines, shares)]
    g_full = (g.reciprocal() + system.alpha_l).reciprocal()
    _check_stable(g_full, ctl.combine(specs, filtered=True), "filtered fleet loop")
    h = closed_loop(g, ctl.combine(specs, filtered=False))
    ss, rocof = predict_metrics(h, dp, f0)
    m_tot, a_tot = ctl.mm_totals(targets, system.machines)
    return Synthesis(specs, None, {"steady_state_mhz": ss, "rocof_hz_s": rocof, "m_total": m_tot,
                                   "alpha_b_total": a_tot})


# -- simulation ------------------------------------------------------------------


def simulate(sc: Scenario, syn: Synthesis) -> Trajectory:
    s = sc.solver
    filtered = sc.controller.filtered
    system = sc.system
    if isinstance(system, AreaParameters):
        ctrl = syn.specs[0] if syn.specs else None
        return simulate_closed_loop(area_state_space(system), ctrl, sc.disturbance, s.dt, s.horizon, filtered)
    if isinstance(system, MachineFleet):
        plant = multi_machine_state_space(system.machines, system.alpha_l)
        return simulate_closed_loop(plant, list(syn.specs) if syn.specs else None, sc.disturbance, s.dt,
                                    s.horizon, filtered)
    specs = syn.specs if syn.specs else [None, None]
    return simulate_two_area(system, specs, sc.disturbance, s.dt, s.horizon, linear=s.linear, filtered=filtered)


def _settles(sc: Scenario) -> bool:
    system = sc.system
    if isinstance(system, AreaParameters):
        return system.k_i == 0.0
    if isinstance(system, TwoAreaModel):
        return not system.agc_enabled
    return True


def run_scenario(sc: Scenario, out_dir=None, write: bool = True) -> RunResult:
    """Synthesize, simulate, measure and (optionally) write the report files."""
    syn = synthesize(sc)
    traj = simulate(sc, syn)
    dp = sc.disturbance.magnitude
    report = analyze_trajectory(traj, sc.f0_hz, dp=dp if dp else None, check_settled=_settles(sc))
    extra = {}
    if isinstance(sc.system, TwoAreaModel):
        for k in (1, 2):
            r = analyze_trajectory(traj, sc.f0_hz, signal=f"omega_{k}", check_settled=_settles(sc))
            extra[f"area_{k}"] = {"nadir_mhz": r.nadir_mhz, "rocof_hz_s": r.rocof_hz_s,
                                  "steady_state_mhz": r.steady_state_mhz}
        extra["max_angle_separation_rad"] = float(np.max(np.abs(traj["delta"])))
    result = RunResult(sc, syn, traj, report, extra)
    if write:
        write_report(result, Path(out_dir if out_dir is not None else sc.output_dir))
    return result


def write_report(res: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    sc = res.scenario
    stride = max(1, int(round(sc.solver.output_dt / sc.solver.dt)))
    header, table = trajectory_table(res.trajectory, sc.f0_hz, stride)
    write_csv(out / "trajectory.csv", header, (list(map(float, r)) for r in table))
    cols = {h: table[:, j] for j, h in enumerate(header)}
    freq = [c for c in header if c.startswith("omega") and c.endswith("_mhz")]
    power = [c for c in header if c.startswith("p_b") and c.endswith("_pu")]
    plot_columns(cols, "t_s", freq, out / "frequency.svg", title=f"{sc.name}: frequency")
    plot_columns(cols, "t_s", power, out / "storage_power.svg", title=f"{sc.name}: storage power")
    write_json(out / "metrics.json", {"scenario": sc.name, "metrics": res.metrics.as_dict(),
                                       "synthesis": res.synthesis.to_dict(), **res.extra})


def summary_line(res: RunResult) -> str:
    m = res.metrics
    case = res.synthesis.case_id if res.synthesis.case_id is not None else "-"
    rel = "" if math.isnan(m.p_b_max_rel) else f" ({m.p_b_max_rel:.3f} dP)"
    return (f"{res.scenario.name}: nadir={m.nadir_mhz:.2f} mHz rocof={m.rocof_hz_s:.4f} Hz/s "
            f"steady_state={m.steady_state_mhz:.2f} mHz p_b_max={m.p_b_max:.5f} pu{rel} "
            f"nadir_free={str(m.nadir_free).lower()} case={case}")


# -- sweep -------------------------------------------------------------------------


def _threads() -> int:
    raw = os.environ.get("GRIDSHAPE_THREADS", "")
    if not raw:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("GRIDSHAPE_THREADS", f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("GRIDSHAPE_THREADS", f"expected a positive integer, got {raw!r}")
    return n


def sweep(sc: Scenario, param: str, grid, threads: int | None = None) -> tuple[list[str], list[list]]:
    """One metrics row per grid value, in grid order."""
    if param not in SWEEP_PARAMS:
        raise ConfigError("--param", f"unknown sweep parameter {param!r} (choose from {', '.join(SWEEP_PARAMS)})")
    if sc.controller.kind not in SWEEP_PARAMS[param]:
        raise ConfigError("--param", f"{param!r} does not apply to controller kind {sc.controller.kind!r}")
    header = [param] + METRIC_FIELDS + ["case_id"]

    def row(value):
        req = sc.controller
        ov = dict(req.overrides)
        ov[param] = float(value)
        sub = sc.replace(controller=type(req)(**{**req.__dict__, "overrides": ov}))
        res = run_scenario(sub, write=False)
        d = res.metrics.as_dict()
        return [float(value)] + [d[k] for k in METRIC_FIELDS] + [res.synthesis.case_id or 0]

    grid = list(grid)
    n = threads if threads is not None else _threads()
    if n <= 1 or len(grid) <= 1:
        rows = [row(v) for v in grid]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(row, grid))
    return header, rows


# -- argument handling --------------------------------------------------------------


def _resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if arg in shipped:
        return shipped[arg]
    raise ConfigError("--config", f"no such file {arg!r} (shipped scenarios: {', '.join(shipped)})")


def _load(args) -> Scenario:
    sc = load_scenario(_resolve_config(args.config))
    solver = sc.solver
    if getattr(args, "dt", None) is not None or getattr(args, "horizon", None) is not None:
        dt = args.dt if args.dt is not None else solver.dt
        horizon = args.horizon if args.horizon is not None else solver.horizon
        if not dt > 0:
            raise ConfigError("--dt", "must be > 0")
        if not horizon >= dt:
            raise ConfigError("--horizon", "must be >= dt")
        sc = sc.replace(solver=type(solver)(dt, horizon, solver.output_dt, solver.linear))
    return sc


def _parse_grid(text: str) -> list[float]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [float(t) for t in items]
    except ValueError:
        raise ConfigError("--grid", f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridshape", description="Storage frequency-response synthesis and simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=True):
        sp.add_argument("--config", required=True, help="scenario file (.toml/.json) or shipped scenario name")
        sp.add_argument("--out-dir", help="output directory (default: scenario output.dir)")
        if sim:
            sp.add_argument("--dt", type=float, help="integration step [s]")
            sp.add_argument("--horizon", type=float, help="simulated time [s]")

    common(sub.add_parser("synth", help="synthesize controllers and print predicted metrics"), sim=False)
    common(sub.add_parser("simulate", help="synthesize, simulate and write the report"))
    sw = sub.add_parser("sweep", help="metrics over a grid of one controller parameter")
    common(sw)
    sw.add_argument("--param", required=True, help="one of: " + ", ".join(SWEEP_PARAMS))
    sw.add_argument("--grid", required=True, help="comma-separated values")
    pl = sub.add_parser("plot", help="render CSV columns as an SVG line chart")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--x", required=True)
    pl.add_argument("--y", required=True, action="append", help="column to plot (repeatable)")
    pl.add_argument("--out", required=True)
    sub.add_parser("list", help="list shipped scenarios")
    return p


def _dispatch(args) -> int:
    if args.command == "list":
        for name, path in shipped_scenarios().items():
            print(f"{name}\t{path}")
        return 0
    if args.command == "plot":
        out = emit_plot(args.csv, args.x, args.y, args.out)
        print(out)
        return 0
    sc = _load(args)
    out = Path(args.out_dir) if args.out_dir else Path(sc.output_dir)
    if args.command == "synth":
        syn = synthesize(sc)
        if args.out_dir:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "controller.json", {"scenario": sc.name, **syn.to_dict()})
        pred = syn.predicted
        parts = [f"{sc.name}: case={syn.case_id if syn.case_id is not None else '-'}"]
        for key, val in pred.items():
            if isinstance(val, dict):
                parts.extend(f"{key}.{k}={v:.6g}" for k, v in val.items())
            else:
                parts.append(f"{key}={val:.6g}")
        print(" ".join(parts))
        return 0
    if args.command == "simulate":
        res = run_scenario(sc, out)
        print(summary_line(res))
        return 0
    header, rows = sweep(sc, args.param, _parse_grid(args.grid))
    out.mkdir(parents=True, exist_ok=True)
    csv_path = write_csv(out / "sweep.csv", header, rows)
    if rows:
        cols = {h: np.array([float(r[j]) for r in rows]) for j, h in enumerate(header)}
        plot_columns(cols, args.param, ["nadir_mhz"], out / "sweep_nadir.svg", title=f"{sc.name}: nadir")
        plot_columns(cols, args.param, ["p_b_max"], out / "sweep_power.svg", title=f"{sc.name}: peak storage power")
    print(f"{csv_path} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ParameterError, MissingSignalError, HorizonTooShortError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 4
    except GridShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
