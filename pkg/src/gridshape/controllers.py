"""Storage frequency-response laws ``p_b = c(s) * omega``.

Sign convention: ``omega`` is the per-unit frequency deviation and ``p_b`` the
storage injection, so a stabilizing law has ``c(0) <= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InfeasibleAllocationError, ParameterError
from .lti import RationalTransfer, balanced_truncation, closed_loop, realize, transfer
from .plant import AreaParameters, MachineParameters, governor_tf, open_loop_plant

DEFAULT_FILTER_HZ = 5.0
_CASE_RTOL = 1e-9


class ControllerKind(str, Enum):
    VIRTUAL_INERTIA = "virtual_inertia"
    FREQUENCY_SHAPING = "frequency_shaping"
    IDROOP = "idroop"
    PER_MACHINE = "per_machine"


@dataclass(frozen=True)
class TuningTargets:
    """Design limits for a step imbalance.

    ``dp`` is the imbalance [pu, > 0], ``domega_d`` the allowed steady-state
    deviation [pu, < 0] and ``rocof_d`` the allowed RoCoF magnitude [pu/s].
    """

    dp: float
    domega_d: float
    rocof_d: float

    def __post_init__(self):
        if not self.dp > 0:
            raise ParameterError("dp", f"must be > 0, got {self.dp!r}")
        if not self.domega_d < 0:
            raise ParameterError("domega_d", f"must be < 0, got {self.domega_d!r}")
        if not self.rocof_d > 0:
            raise ParameterError("rocof_d", f"must be > 0, got {self.rocof_d!r}")

    @classmethod
    def from_hz(cls, dp: float, steady_state_mhz: float, rocof_hz_s: float, f0_hz: float = 50.0):
        return cls(dp, steady_state_mhz / 1000.0 / f0_hz, rocof_hz_s / f0_hz)


@dataclass(frozen=True)
class ViTuning:
    m_v: float
    alpha_b: float
    area: AreaParameters
    predicted_rocof: float = math.nan

    @property
    def alpha_tot(self) -> float:
        return self.area.alpha_g + self.alpha_b

    @property
    def m_tilde(self) -> float:
        return 2.0 * self.area.H + self.m_v

    @property
    def beta(self) -> float:
        return math.sqrt(self.area.alpha_g) + math.sqrt(self.alpha_tot)


@dataclass(frozen=True)
class FsTuning:
    a: float
    b: float
    case_id: int
    predicted_domega: float = math.nan
    predicted_rocof: float = math.nan

    def check(self, area: AreaParameters) -> None:
        if self.a < 2.0 * area.H - 1e-12:
            raise ParameterError("a", f"{self.a!r} below natural inertia 2H = {2 * area.H!r}")
        if self.b < area.alpha_g - 1e-12:
            raise ParameterError("b", f"{self.b!r} below natural droop alpha_g = {area.alpha_g!r}")
        if self.case_id not in (1, 2, 3, 4):
            raise ParameterError("case_id", f"must be 1..4, got {self.case_id!r}")


@dataclass(frozen=True, eq=False)
class ControllerSpec:
    """A synthesized storage law.

    ``tf`` is the raw (possibly improper) law used in algebraic identities;
    ``tf_filtered`` is the proper version used for filtered simulations.
    """

    kind: ControllerKind
    params: dict
    tf: RationalTransfer
    tf_filtered: RationalTransfer
    filter_hz: float = DEFAULT_FILTER_HZ
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tf_filtered.is_proper:
            raise ParameterError("tf_filtered", "filtered law must be proper")
        if abs(self.tf_filtered(0.0) - self.tf(0.0)) > 1e-12 * max(1.0, abs(self.tf(0.0))):
            raise ParameterError("tf_filtered", "filter changed the DC gain")

    def law(self, filtered: bool = True) -> RationalTransfer:
        return self.tf_filtered if filtered else self.tf

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": dict(self.params),
            "filter_hz": self.filter_hz,
            "tf": {"num": self.tf.num.tolist(), "den": self.tf.den.tolist()},
            "tf_filtered": {"num": self.tf_filtered.num.tolist(), "den": self.tf_filtered.den.tolist()},
            **{k: v for k, v in self.extras.items()},
        }


def augment_lowpass(tf: RationalTransfer, f_c: float = DEFAULT_FILTER_HZ) -> RationalTransfer:
    """Append just enough first-order low-pass stages at ``f_c`` Hz to make ``tf`` proper."""
    if not f_c > 0:
        raise ParameterError("f_c", f"must be > 0, got {f_c!r}")
    k = max(0, -tf.relative_degree)
    stage = RationalTransfer([1.0], [1.0, 1.0 / (2.0 * math.pi * f_c)])
    for _ in range(k):
        tf = tf * stage
    return tf


def _spec(kind, params, tf, filter_hz, **extras) -> ControllerSpec:
    return ControllerSpec(kind, params, tf, augment_lowpass(tf, filter_hz), filter_hz, extras)


# -- virtual inertia ---------------------------------------------------------


def vi_controller(m_v: float, alpha_b: float, filter_hz: float = DEFAULT_FILTER_HZ) -> ControllerSpec:
    """Inertial plus droop response ``c(s) = -(m_v s + alpha_b)``."""
    if m_v < 0:
        raise ParameterError("m_v", f"must be >= 0, got {m_v!r}")
    if alpha_b < 0:
        raise ParameterError("alpha_b", f"must be >= 0, got {alpha_b!r}")
    tf = RationalTransfer([-alpha_b, -m_v])
    return _spec(ControllerKind.VIRTUAL_INERTIA, {"m_v": m_v, "alpha_b": alpha_b}, tf, filter_hz)


def vi_min_inertia(area: AreaParameters, alpha_b: float, approximate: bool = False) -> float:
    """Smallest virtual inertia giving a step response without overshoot.

    Exact: ``tau_T (sqrt(alpha_g) + sqrt(alpha_g + alpha_b))**2 - 2H``.
    Approximate (``alpha_b << alpha_g``): ``2 tau_T (2 alpha_g + alpha_b) - 2H``.
    Negative values clamp to zero.
    """
    if alpha_b < 0:
        raise ParameterError("alpha_b", f"must be >= 0, got {alpha_b!r}")
    if approximate:
        m = 2.0 * area.tau_t * (2.0 * area.alpha_g + alpha_b)
    else:
        beta = math.sqrt(area.alpha_g) + math.sqrt(area.alpha_g + alpha_b)
        m = area.tau_t * beta * beta
    return max(m - 2.0 * area.H, 0.0)


def vi_tune(targets: TuningTargets, area: AreaParameters) -> ViTuning:
    alpha_b = max(abs(targets.dp / targets.domega_d) - area.alpha_g, 0.0)
    m_v = vi_min_inertia(area, alpha_b)
    return ViTuning(m_v, alpha_b, area, predicted_rocof=targets.dp / (2.0 * area.H + m_v))


# -- frequency shaping -------------------------------------------------------


def fs_coefficients(a: float, b: float, area: AreaParameters) -> tuple[float, float, float]:
    """Numerator coefficients ``(A1, A2, A3)`` of the shaping law."""
    tau, m2 = area.tau_t, 2.0 * area.H
    return tau * (a - m2), b * tau + a - m2, b - area.alpha_g


def fs_controller(tuning: FsTuning, area: AreaParameters, filter_hz: float = DEFAULT_FILTER_HZ) -> ControllerSpec:
    """Law ``-(A1 s^2 + A2 s + A3) / (tau_T s + 1)`` rendering ``1/(a s + b)``."""
    tuning.check(area)
    A1, A2, A3 = fs_coefficients(tuning.a, tuning.b, area)
    tf = RationalTransfer([-A3, -A2, -A1], [1.0, area.tau_t])
    params = {"a": tuning.a, "b": tuning.b, "case_id": tuning.case_id, "A1": A1, "A2": A2, "A3": A3}
    return _spec(ControllerKind.FREQUENCY_SHAPING, params, tf, filter_hz)


def fs_case(a: float, b: float, area: AreaParameters) -> int:
    """Case number for a shaped loop: which of ``a``, ``b`` exceed the plant values.

    A relative slack of 1e-9 keeps targets stated at exactly the plant value in
    the cheaper case.
    """
    raise_a = a > 2.0 * area.H * (1.0 + _CASE_RTOL)
    raise_b = b > area.alpha_g * (1.0 + _CASE_RTOL)
    return {(False, False): 1, (False, True): 2, (True, False): 3, (True, True): 4}[(raise_a, raise_b)]


def fs_tune(targets: TuningTargets, area: AreaParameters) -> FsTuning:
    """Pick the cheapest ``(a, b)`` meeting both targets.

    A bound the natural plant already satisfies leaves the corresponding
    constant at its plant value.
    """
    need_a = targets.dp / targets.rocof_d
    need_b = targets.dp / abs(targets.domega_d)
    case_id = fs_case(need_a, need_b, area)
    a = need_a if case_id in (3, 4) else 2.0 * area.H
    b = need_b if case_id in (2, 4) else area.alpha_g
    return FsTuning(a, b, case_id, predicted_domega=-targets.dp / b, predicted_rocof=targets.dp / a)


def idroop_controller(area: AreaParameters, alpha_b: float, filter_hz: float = DEFAULT_FILTER_HZ) -> ControllerSpec:
    """Dynamic droop ``alpha_g / (tau_T s + 1) - (alpha_g + alpha_b)``."""
    if alpha_b < 0:
        raise ParameterError("alpha_b", f"must be >= 0, got {alpha_b!r}")
    tf = RationalTransfer([area.alpha_g], [1.0, area.tau_t]) - (area.alpha_g + alpha_b)
    return _spec(ControllerKind.IDROOP, {"alpha_b": alpha_b}, tf, filter_hz)


def shaped_loop(spec: ControllerSpec, area: AreaParameters, filtered: bool = False) -> RationalTransfer:
    """Closed loop of ``spec`` with the synthesis plant (no load damping or AGC).

    The turbine lag is cancelled for the raw law, which makes the shaping
    identity exact.
    """
    g = open_loop_plant(area)
    if filtered:
        return closed_loop(g, spec.tf_filtered)
    return closed_loop(g, spec.tf, cancel=[1.0, area.tau_t])


# -- multi-machine -----------------------------------------------------------


def mm_totals(targets: TuningTargets, machines: Sequence[MachineParameters]) -> tuple[float, float]:
    """Fleet-wide virtual inertia and extra droop, clamped at zero."""
    m_tot = max(targets.dp / targets.rocof_d - 2.0 * sum(m.H for m in machines), 0.0)
    a_tot = max(targets.dp / abs(targets.domega_d) - sum(m.alpha_g for m in machines), 0.0)
    return m_tot, a_tot


def _split(total, weights, what):
    weights = np.asarray(weights, dtype=float)
    s = weights.sum()
    if total == 0.0:
        return np.zeros(len(weights))
    if s <= 0.0:
        raise InfeasibleAllocationError(f"no machine can absorb the required {what} ({total:.4g})")
    return total * weights / s


def mm_allocate(targets: TuningTargets, machines: Sequence[MachineParameters], policy: str = "proportional",
                thresholds: tuple[float, float] | None = None) -> list[tuple[float, float]]:
    """Per-machine ``(m_i, alpha_b_i)`` summing to the fleet totals.

    Policies
    --------
    ``proportional``
        Shares follow machine ratings.
    ``uniform``
        Equal shares.
    ``deficit``
        Only machines below per-rating thresholds ``(h_min, alpha_min)`` take
        shares, in proportion to their shortfall.  The default thresholds are
        the fleet-average requirements.
    """
    if not machines:
        raise ParameterError("machines", "fleet is empty")
    m_tot, a_tot = mm_totals(targets, machines)
    ratings = [m.rating for m in machines]
    if policy == "proportional":
        wm = wa = ratings
    elif policy == "uniform":
        wm = wa = [1.0] * len(machines)
    elif policy == "deficit":
        if thresholds is None:
            rsum = sum(ratings)
            thresholds = (targets.dp / targets.rocof_d / (2.0 * rsum), targets.dp / abs(targets.domega_d) / rsum)
        h_min, alpha_min = thresholds
        wm = [max(2.0 * h_min * m.rating - 2.0 * m.H, 0.0) for m in machines]
        wa = [max(alpha_min * m.rating - m.alpha_g, 0.0) for m in machines]
        for total, w, what in ((m_tot, wm, "inertia"), (a_tot, wa, "droop")):
            if total > 0.0 and sum(w) < total * (1.0 - 1e-12):
                raise InfeasibleAllocationError(
                    f"deficit thresholds absorb {sum(w):.4g} of the required {what} {total:.4g}"
                )
    else:
        raise ParameterError("policy", f"unknown allocation policy {policy!r}")
    ms = _split(m_tot, wm, "inertia")
    als = _split(a_tot, wa, "droop")
    return [(float(m), float(a)) for m, a in zip(ms, als)]


def reduced_governor(machine: MachineParameters, order: int) -> RationalTransfer:
    """Balanced-truncation model of the governor, rescaled to unit DC gain.

    ``order <= 0`` or ``order >= n`` returns the full model.
    """
    full = governor_tf(machine.governor)
    n = full.den_degree
    if order <= 0 or order >= n:
        return full
    red, _ = balanced_truncation(realize(full), order)
    tr = transfer(red)
    return RationalTransfer(tr.num / tr.dc_gain(), tr.den)


def mm_controller(machine: MachineParameters, m_i: float, alpha_b_i: float, reduction_order: int = 0,
                  filter_hz: float = DEFAULT_FILTER_HZ) -> ControllerSpec:
    """Per-machine law ``-(m_i s - alpha_g T~(s) + alpha_g + alpha_b_i)``."""
    if reduction_order < 0:
        raise ParameterError("reduction_order", f"must be >= 0, got {reduction_order!r}")
    if m_i < 0 or alpha_b_i < 0:
        raise ParameterError("m_i/alpha_b_i", "shares must be >= 0")
    t_red = reduced_governor(machine, reduction_order)
    ag = machine.alpha_g
    tf = ag * t_red - (ag + alpha_b_i) - RationalTransfer([0.0, m_i])
    params = {"m_i": m_i, "alpha_b_i": alpha_b_i, "reduction_order": reduction_order}
    return _spec(ControllerKind.PER_MACHINE, params, tf, filter_hz,
                 governor_model={"num": t_red.num.tolist(), "den": t_red.den.tolist()})


def combine(specs: Sequence[ControllerSpec], filtered: bool = True) -> RationalTransfer:
    """Parallel sum of several storage laws acting on the same frequency."""
    total = RationalTransfer.gain(0.0)
    for s in specs:
        total = total + s.law(filtered)
    return total
