"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest -m acceptance -s`` or directly with ``python3 tests/test_acceptance.py``.
Criteria that the model cannot meet are left failing; see the decisions ledger.
"""

from __future__ import annotations

import dataclasses
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from gridshape import cli
from gridshape.config import load_scenario, shipped_scenarios
from gridshape.controllers import (FsTuning, fs_case, fs_controller, idroop_controller, shaped_loop, vi_controller,
                                   vi_min_inertia)
from gridshape.lti import RationalTransfer, balanced_truncation, closed_loop, freq_response, realize
from gridshape.metrics import analyze_trajectory, energy_estimate, predict_metrics, vi_power_closed_form
from gridshape.plant import GB_DP, IEEEG1, AreaParameters, area_state_space, governor_tf, open_loop_plant
from gridshape.report import write_csv
from gridshape.sim import DisturbanceSpec, simulate_closed_loop, simulate_two_area

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover
    ACCEPTANCE_LINES = []

pytestmark = pytest.mark.acceptance

GB = AreaParameters(H=2.19, tau_t=1.0, alpha_g=15.0)
DP = GB_DP
F0 = 50.0
T0 = 1.0
SHIPPED = shipped_scenarios()

# Peak storage power ratio FS/VI at matched RoCoF, from a dense scipy.signal.step
# run (dt = 1e-4 s) of c(s) h(s) for both unfiltered laws.
C6_ORACLE_RATIO = 1.0007275295745623


def _report(num: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _run(spec, area=GB, dp=DP, dt=1e-3, horizon=60.0, filtered=False):
    return simulate_closed_loop(area_state_space(area), spec, DisturbanceSpec(dp, start_time=T0), dt, horizon,
                                filtered)


def _first_order(t, a, b, dp=DP):
    tt = np.clip(t - T0, 0.0, None)
    return -dp / b * (1.0 - np.exp(-b * tt / a))


# -- criteria ------------------------------------------------------------------------


def check_1() -> bool:
    predicted, _ = predict_metrics(open_loop_plant(GB), DP, F0)
    m = analyze_trajectory(_run(None), F0, dp=DP)
    ok = abs(predicted + 187.5) <= 0.5 and abs(m.steady_state_mhz + 187.5) <= 0.5
    return _report(1, "steady state", ok, f"predicted {predicted:.4f} mHz, simulated {m.steady_state_mhz:.4f} mHz")


def check_2() -> bool:
    m_min = vi_min_inertia(GB, 0.0)
    at = analyze_trajectory(_run(vi_controller(m_min, 0.0)), F0, nadir_tol=0.005)
    below = analyze_trajectory(_run(vi_controller(0.8 * m_min, 0.0)), F0, nadir_tol=0.005)
    below_f = analyze_trajectory(_run(vi_controller(0.8 * m_min, 0.0), filtered=True), F0, nadir_tol=0.005)
    ok = abs(m_min - 55.62) < 5e-3 and at.nadir_free and not below.nadir_free and below.overshoot > 0.02
    return _report(2, "no-overshoot inertia boundary", ok,
                   f"m_v,min={m_min:.3f}; at m_v,min overshoot {at.overshoot:.2e} (nadir_free={at.nadir_free}); "
                   f"at 0.8 m_v,min overshoot {100 * below.overshoot:.3f}% unfiltered, "
                   f"{100 * below_f.overshoot:.3f}% filtered (required > 2%)")


def check_3() -> bool:
    details, ok = [], True
    for a, b in ((2 * GB.H, 15.0), (8.0, 15.0), (4.38, 20.0), (8.0, 20.0)):
        spec = fs_controller(FsTuning(a, b, fs_case(a, b, GB)), GB)
        h = shaped_loop(spec, GB)
        target = RationalTransfer([1.0], [b, a])
        same = (h.num.shape == target.num.shape and h.den.shape == target.den.shape
                and np.allclose(h.num, target.num, rtol=0, atol=1e-9)
                and np.allclose(h.den, target.den, rtol=0, atol=1e-9))
        ok &= same
    details.append(f"identity {'holds' if ok else 'broken'} for all four cases")
    for case_id, a in ((1, 2 * GB.H), (3, DP / (0.5 / F0))):
        spec = fs_controller(FsTuning(a, 15.0, case_id), GB)
        tr = _run(spec, horizon=30.0, filtered=True)
        err = np.max(np.abs(tr["omega"] - _first_order(tr.t, a, 15.0))) / (DP / 15.0)
        ok &= err <= 0.01
        details.append(f"case {case_id} filtered sup error {100 * err:.3f}%")
    return _report(3, "shaping identity and response", ok, "; ".join(details) + " (limit 1%)")


def check_4() -> bool:
    rocof_d = 0.5
    a = DP / (rocof_d / F0)
    spec = fs_controller(FsTuning(a, 15.0, fs_case(a, 15.0, GB)), GB)
    m = analyze_trajectory(_run(spec), F0)
    mf = analyze_trajectory(_run(spec, filtered=True), F0)
    ss_ref = -DP / 15.0 * F0 * 1000.0
    ok = abs(m.rocof_hz_s - rocof_d) <= 0.05 * rocof_d and abs(m.steady_state_mhz - ss_ref) <= 0.005 * abs(ss_ref)
    return _report(4, "metric pinning", ok,
                   f"RoCoF {m.rocof_hz_s:.4f} Hz/s (target 0.5), steady state {m.steady_state_mhz:.3f} mHz "
                   f"(ref {ss_ref:.3f}); filtered RoCoF {mf.rocof_hz_s:.4f} Hz/s for information")


def check_5() -> bool:
    spec = vi_controller(vi_min_inertia(GB, 0.0), 0.0)
    tr = _run(spec, horizon=40.0)
    post = tr.t >= T0
    ref = vi_power_closed_form(GB, DP, tr.t[post] - T0)
    err = np.max(np.abs(tr["p_b"][post] - ref)) / DP
    peak = np.max(np.abs(tr["p_b"])) / DP
    expected = 1.0 - GB.H / (2.0 * GB.tau_t * GB.alpha_g)
    ok = err <= 0.01 and abs(peak - 0.927) <= 0.01 and abs(expected - 0.927) <= 0.01
    return _report(5, "inertia power closed form", ok,
                   f"sup error {err:.2e} dP, p_b_max/dP {peak:.4f} (closed form {expected:.4f})")


def check_6() -> bool:
    m_min = vi_min_inertia(GB, 0.0)
    a = 2 * GB.H + m_min
    vi = analyze_trajectory(_run(vi_controller(m_min, 0.0)), F0, dp=DP)
    fs = analyze_trajectory(_run(fs_controller(FsTuning(a, GB.alpha_g, fs_case(a, GB.alpha_g, GB)), GB)), F0, dp=DP)
    ratio = fs.p_b_max / vi.p_b_max
    c1 = analyze_trajectory(_run(fs_controller(FsTuning(2 * GB.H, GB.alpha_g, 1), GB)), F0, dp=DP)
    pinned = abs(ratio / C6_ORACLE_RATIO - 1.0) <= 0.02
    ok = vi.nadir_free and fs.nadir_free and pinned and ratio <= 0.75
    return _report(6, "peak-power advantage", ok,
                   f"matched RoCoF {DP / a * F0:.4f} Hz/s: FS/VI = {ratio:.6f} (oracle {C6_ORACLE_RATIO:.6f}, "
                   f"pinned={pinned}; required <= 0.75); case-1 FS/VI = {c1.p_b_max / vi.p_b_max:.4f} "
                   f"for information")


def check_7() -> bool:
    sc = load_scenario(SHIPPED["gb_vi_secondary"])
    res = cli.run_scenario(sc, write=False)
    spec = res.synthesis.specs[0]
    est = energy_estimate(spec.params["alpha_b"], sc.system.k_i, sc.disturbance.magnitude)
    e_max = res.metrics.e_b_max
    ok = abs(spec.params["alpha_b"] - 3.75) < 1e-9 and 0.5 <= e_max / est <= 2.0
    return _report(7, "energy estimate", ok, f"E_b,max {e_max:.4f} pu s vs estimate {est:.4f} pu s "
                                             f"(ratio {e_max / est:.3f})")


def check_8() -> bool:
    ss = realize(governor_tf(IEEEG1()))
    red, hsv = balanced_truncation(ss, 2)
    w = np.logspace(-3, 3, 200)
    err = np.max(np.abs(freq_response(ss, w) - freq_response(red, w)))
    bound = 2.0 * hsv[2:].sum()
    bound_ok = err <= bound

    sc = load_scenario(SHIPPED["three_machine"])
    sc = sc.replace(controller=dataclasses.replace(sc.controller, filtered=False))
    syn = cli.synthesize(sc)
    tr = cli.simulate(sc, syn)
    t = sc.tuning_targets()
    a, b = t.dp / t.rocof_d, t.dp / abs(t.domega_d)
    dev = np.max(np.abs(tr["omega"] - _first_order(tr.t, a, b, t.dp))) / (t.dp / b)
    ok = bound_ok and dev <= 0.02
    return _report(8, "model reduction", ok,
                   f"order-2 error {err:.4f} <= bound {bound:.4f}: {bound_ok}; three-machine COI sup deviation "
                   f"from 1/(as+b) {100 * dev:.2f}% with order-{sc.controller.reduction_order} models (limit 2%)")


def check_9() -> bool:
    sc = load_scenario(SHIPPED["two_area"])
    res = cli.run_scenario(sc, write=False)
    floor = sc.tuning_targets().domega_d
    tr = res.trajectory
    floors_ok = min(tr["omega_1"].min(), tr["omega_2"].min()) >= floor

    # linear tangent coupling against the sine; the gap grows with the angle swing, so the
    # small-angle regime is taken as a 0.01 pu step (swing well under 0.01 rad)
    specs = res.synthesis.specs
    kw = dict(dt=sc.solver.dt, horizon=30.0)

    def lin_gap(dp):
        d = dataclasses.replace(sc.disturbance, magnitude=dp)
        nl = simulate_two_area(sc.system, specs, d, **kw)
        lin = simulate_two_area(sc.system, specs, d, linear=True, **kw)
        gap = max(np.max(np.abs(nl["p12"] - lin["p12"])), np.max(np.abs(nl["p_b"] - lin["p_b"]))) / dp
        return gap, np.max(np.abs(nl["delta"] - nl["delta"][0]))

    lin_err, angle = lin_gap(0.01)
    ship_err, ship_angle = lin_gap(sc.disturbance.magnitude)
    lin_ok = lin_err <= 1e-3
    dp = sc.disturbance.magnitude

    # identical shaping targets in both areas, step in area 1: tie support never hurts area 1
    a1 = sc.system.areas[0]
    a, b = 20.0, 25.0
    laws = [fs_controller(FsTuning(a, b, fs_case(a, b, ar)), ar) for ar in sc.system.areas]
    d1 = DisturbanceSpec(dp, area_index=0, start_time=T0)
    tie = simulate_two_area(sc.system, laws, d1, **kw)
    iso = simulate_closed_loop(area_state_space(a1, include_load_damping=True, include_secondary=False), laws[0],
                               d1, sc.solver.dt, kw["horizon"], True)
    margin = float(np.min(tie["omega_1"] - iso["omega"]))
    tie_ok = margin >= -1e-12
    ok = floors_ok and lin_ok and tie_ok
    return _report(9, "two-area properties", ok,
                   f"min area frequency {min(tr['omega_1'].min(), tr['omega_2'].min()) * F0 * 1e3:.2f} mHz "
                   f"(floor {floor * F0 * 1e3:.1f}); linear vs sine {100 * lin_err:.4f}% dP at "
                   f"{angle:.4f} rad swing (limit 0.1%; {100 * ship_err:.4f}% at the shipped {ship_angle:.4f} rad); "
                   f"min(tie - isolated) {margin:.2e} pu")


def _random_case(rng):
    area = AreaParameters(H=rng.uniform(1.0, 8.0), tau_t=rng.uniform(0.3, 3.0), alpha_g=rng.uniform(3.0, 30.0),
                          alpha_l=rng.uniform(0.0, 2.0))
    kind = rng.integers(0, 5)
    if kind == 0:
        return area, None, False
    if kind == 1:
        m = rng.uniform(0.0, 2.0) * vi_min_inertia(area, 0.0)
        return area, vi_controller(m, rng.uniform(0.0, 10.0)), True
    if kind == 2:
        return area, idroop_controller(area, rng.uniform(0.0, 10.0)), True
    a, b = 2 * area.H + rng.uniform(0.0, 20.0), area.alpha_g + rng.uniform(0.0, 20.0)
    return area, fs_controller(FsTuning(a, b, fs_case(a, b, area)), area), bool(kind == 4)


def check_10() -> bool:
    rng = np.random.default_rng(20240601)
    worst_fv = worst_iv = 0.0
    for _ in range(100):
        area, spec, filtered = _random_case(rng)
        law = spec.law(filtered) if spec else None
        g = open_loop_plant(area, include_load_damping=True)
        h = g if law is None else closed_loop(g, law)
        p = h.poles()
        slow = np.min(np.abs(p.real))
        horizon = T0 + 25.0 / slow
        dt = min(1e-3, 1.0 / np.max(np.abs(p)))
        tr = _run(spec, area=area, dt=dt, horizon=horizon, filtered=filtered)
        ss_pred, rocof_pred = predict_metrics(h, DP, F0)
        m = analyze_trajectory(tr, F0, check_settled=False)
        k0 = int(np.argmax(tr.t >= T0))
        worst_fv = max(worst_fv, abs(m.steady_state_mhz / ss_pred - 1.0))
        worst_iv = max(worst_iv, abs(abs(tr["omega_dot"][k0]) * F0 / rocof_pred - 1.0))
    limits_ok = worst_fv <= 0.005 and worst_iv <= 0.02

    worst_halving, worst_name = 0.0, ""
    for name, path in SHIPPED.items():
        sc = load_scenario(path)
        s = sc.solver
        base = cli.run_scenario(sc, write=False).metrics
        fine = cli.run_scenario(sc.replace(solver=dataclasses.replace(s, dt=s.dt / 2)), write=False).metrics
        scale = max(abs(base.nadir_mhz), 1e-12)
        diffs = [abs(fine.nadir_mhz - base.nadir_mhz) / scale,
                 abs(fine.steady_state_mhz - base.steady_state_mhz) / scale,
                 abs(fine.p_b_max - base.p_b_max) / max(base.p_b_max, 1e-12) if base.p_b_max else 0.0,
                 abs(fine.e_b_max - base.e_b_max) / max(base.e_b_max, 1e-12) if base.e_b_max else 0.0]
        if max(diffs) > worst_halving:
            worst_halving, worst_name = max(diffs), name
    halving_ok = worst_halving < 1e-4

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for run, threads in enumerate((1, 4, 4)):
            header, rows = cli.sweep(load_scenario(SHIPPED["gb_vi_mvmin"]), "m_v", [10.0, 30.0, 55.62, 70.0],
                                     threads=threads)
            p = Path(tmp) / f"sweep{run}.csv"
            write_csv(p, header, rows)
            outputs.append(p.read_bytes())
    det_ok = len(set(outputs)) == 1
    ok = limits_ok and halving_ok and det_ok
    return _report(10, "numerical hygiene", ok,
                   f"100 random loops: worst final-value error {100 * worst_fv:.4f}% (limit 0.5%), worst "
                   f"initial-rate error {100 * worst_iv:.4f}% (limit 2%); step halving worst change "
                   f"{100 * worst_halving:.2e}% ({worst_name}); sweep bytes identical across runs/threads: {det_ok}")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(check):
    assert check()


if __name__ == "__main__":
    results = [c() for c in CHECKS]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
