"""Frequency-security and storage metrics from trajectories and transfer functions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import HorizonTooShortError, MissingSignalError, ParameterError
from .lti import RationalTransfer, Trajectory, final_step_value, initial_step_rate
from .plant import AreaParameters

TAIL_FRACTION = 0.05
SETTLED_SLOPE = 1e-6  # pu/s


@dataclass(frozen=True)
class MetricsReport:
    """Summary of one disturbance response.

    Frequencies are reported in mHz and Hz/s, storage quantities in per unit
    of the system base and, where ``dp`` is known, per unit of the imbalance.
    """

    nadir_mhz: float
    t_nadir: float
    rocof_hz_s: float
    steady_state_mhz: float
    overshoot: float
    nadir_free: bool
    nadir_tol: float
    p_b_max: float = 0.0
    p_b_max_rel: float = math.nan
    e_b_max: float = 0.0
    e_b_max_pu_h: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _tail(n: int) -> slice:
    k = max(1, int(math.ceil(TAIL_FRACTION * n)))
    return slice(n - k, n)


def analyze_trajectory(traj: Trajectory, f0_hz: float = 50.0, nadir_tol: float = 0.005, dp: float | None = None,
                       signal: str = "omega", check_settled: bool = True) -> MetricsReport:
    """Measure a trajectory.

    Parameters
    ----------
    traj : Trajectory
        Must contain ``signal``; ``omega_dot``, ``p_b`` and ``E_b`` are used
        when present (``omega_dot`` otherwise comes from central differences).
    f0_hz : float
        Nominal frequency.
    nadir_tol : float
        Allowed overshoot beyond the tail value, relative to the tail value.
    dp : float, optional
        Imbalance size, for the disturbance-normalized peak power.
    check_settled : bool
        Raise :class:`HorizonTooShortError` when the tail still drifts.
    """
    if signal not in traj:
        raise MissingSignalError(f"trajectory has no {signal!r} signal (have {sorted(traj.signals)})")
    w = traj[signal]
    n = len(w)
    if n == 0:
        raise HorizonTooShortError("empty trajectory")
    if f"{signal}_dot" in traj:
        wd = traj[f"{signal}_dot"]
    elif n > 1:
        wd = np.gradient(w, traj.dt)
    else:
        wd = np.zeros(1)

    tail = _tail(n)
    w_tail = float(np.mean(w[tail]))
    if check_settled and n - tail.start > 2:
        t = traj.t[tail]
        slope = np.polyfit(t - t[0], w[tail], 1)[0]
        if abs(slope) > SETTLED_SLOPE:
            raise HorizonTooShortError(
                f"tail of {signal!r} drifts at {slope:.3g} pu/s; lengthen the horizon"
            )
    absw = np.abs(w)
    k_nadir = int(np.argmax(absw))
    peak = float(absw[k_nadir])
    excess = peak - abs(w_tail)
    overshoot = excess / abs(w_tail) if w_tail != 0.0 else (0.0 if peak == 0.0 else math.inf)
    nadir_free = bool(excess <= nadir_tol * abs(w_tail))

    p_b_max = float(np.max(np.abs(traj["p_b"]))) if "p_b" in traj else 0.0
    e_b_max = float(np.max(np.abs(traj["E_b"]))) if "E_b" in traj else 0.0
    return MetricsReport(
        nadir_mhz=peak * f0_hz * 1000.0,
        t_nadir=float(traj.t[k_nadir]),
        rocof_hz_s=float(np.max(np.abs(wd))) * f0_hz,
        steady_state_mhz=w_tail * f0_hz * 1000.0,
        overshoot=max(overshoot, 0.0),
        nadir_free=nadir_free,
        nadir_tol=nadir_tol,
        p_b_max=p_b_max,
        p_b_max_rel=p_b_max / dp if dp else math.nan,
        e_b_max=e_b_max,
        e_b_max_pu_h=e_b_max / 3600.0,
    )


def predict_metrics(closed_loop_tf: RationalTransfer, dp: float, f0_hz: float = 50.0) -> tuple[float, float]:
    """Steady-state deviation [mHz] and initial RoCoF [Hz/s] from limits.

    ``closed_loop_tf`` maps the imbalance, taken as a generation loss, to
    frequency, so the steady state carries a negative sign for ``dp > 0``.
    """
    if dp == 0.0:
        return 0.0, 0.0
    ss = -dp * final_step_value(closed_loop_tf) * f0_hz * 1000.0
    rocof = abs(dp * initial_step_rate(closed_loop_tf)) * f0_hz
    return float(ss), float(rocof)


def vi_power_closed_form(area: AreaParameters, dp: float, t):
    """Storage power under VI at the no-overshoot inertia with zero droop."""
    t = np.asarray(t, dtype=float)
    tau = area.tau_t
    out = dp * (1.0 - area.H / (2.0 * tau * area.alpha_g)) * (1.0 + t / (2.0 * tau)) * np.exp(-t / (2.0 * tau))
    return float(out) if out.ndim == 0 else out


def energy_estimate(alpha_b: float, k_i: float, dp: float) -> float:
    """Order-of-magnitude storage energy ``dp * alpha_b / K_I`` [pu s]."""
    if k_i == 0.0:
        raise ParameterError("k_i", "energy estimate undefined without secondary control")
    if k_i < 0.0:
        raise ParameterError("k_i", f"must be > 0, got {k_i!r}")
    return dp * alpha_b / k_i
