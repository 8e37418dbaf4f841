"""Open-loop power-system models.

All quantities are per unit on the system power base; frequency ``omega`` is
the per-unit deviation from nominal.  Conversions to Hz and mHz happen only
in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ParameterError
from .lti import RationalTransfer, StateSpace, realize, split_derivative


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ParameterError(name, f"must be > 0, got {value!r}")


def _nonnegative(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ParameterError(name, f"must be >= 0, got {value!r}")


@dataclass(frozen=True)
class AreaParameters:
    """Aggregate single-area data.

    Attributes
    ----------
    H : float
        Inertia constant [s].
    tau_t : float
        Turbine time constant [s].
    alpha_g : float
        Aggregate inverse droop of generators [pu].
    alpha_l : float
        Load-frequency sensitivity [pu].
    k_i : float
        Secondary (integral) control gain [pu/s].
    f0_hz : float
        Nominal frequency, 50 or 60 Hz.
    """

    H: float
    tau_t: float
    alpha_g: float
    alpha_l: float = 0.0
    k_i: float = 0.0
    f0_hz: float = 50.0

    def __post_init__(self):
        _positive("H", self.H)
        _positive("tau_t", self.tau_t)
        _positive("alpha_g", self.alpha_g)
        _nonnegative("alpha_l", self.alpha_l)
        _nonnegative("k_i", self.k_i)
        if self.f0_hz not in (50.0, 60.0):
            raise ParameterError("f0_hz", f"must be 50 or 60, got {self.f0_hz!r}")


# Great Britain, high-renewable scenario on a 32 GVA base.
GB_AREA = AreaParameters(H=2.19, tau_t=1.0, alpha_g=15.0, alpha_l=1.0, k_i=0.05, f0_hz=50.0)
GB_BASE_GVA = 32.0
GB_DP = 1.8 / GB_BASE_GVA


# -- governor / turbine models -----------------------------------------------


@dataclass(frozen=True)
class FirstOrder:
    tau_t: float

    def __post_init__(self):
        _positive("tau_t", self.tau_t)

    def transfer(self) -> RationalTransfer:
        return RationalTransfer([1.0], [1.0, self.tau_t])


@dataclass(frozen=True)
class IEEEG1:
    """Steam turbine: ``[K1(1+T5 s) + K3] / [(1+T1 s)(1+T3 s)(1+T4 s)(1+T5 s)]``."""

    k1: float = 0.5
    k3: float = 0.5
    t1: float = 0.25
    t3: float = 0.1
    t4: float = 0.3
    t5: float = 5.0

    def __post_init__(self):
        for name in ("t1", "t3", "t4", "t5"):
            _positive(name, getattr(self, name))
        if abs(self.k1 + self.k3 - 1.0) > 1e-9:
            raise ParameterError("k1+k3", f"must equal 1 for unit DC gain, got {self.k1 + self.k3!r}")

    def transfer(self) -> RationalTransfer:
        num = [self.k1 + self.k3, self.k1 * self.t5]
        den = [1.0]
        for tc in (self.t1, self.t3, self.t4, self.t5):
            den = P.polymul(den, [1.0, tc])
        return RationalTransfer(num, den)


@dataclass(frozen=True)
class Hydro:
    """Linearized hydro turbine ``(1 - Tw s) / (1 + Tw s / 2)``."""

    t_w: float = 1.0

    def __post_init__(self):
        _positive("t_w", self.t_w)

    def transfer(self) -> RationalTransfer:
        return RationalTransfer([1.0, -self.t_w], [1.0, 0.5 * self.t_w])


GovernorModel = Union[FirstOrder, IEEEG1, Hydro]


def governor_tf(model: GovernorModel) -> RationalTransfer:
    """Combined governor-turbine transfer ``T(s)`` with ``T(0) = 1``."""
    return model.transfer()


@dataclass(frozen=True)
class MachineParameters:
    H: float
    alpha_g: float
    governor: GovernorModel
    rating: float = 1.0

    def __post_init__(self):
        _positive("H", self.H)
        _nonnegative("alpha_g", self.alpha_g)
        _positive("rating", self.rating)


# -- single area -------------------------------------------------------------


def open_loop_plant(area: AreaParameters, include_load_damping: bool = False,
                    include_secondary: bool = False) -> RationalTransfer:
    """Generator block ``g(s)`` mapping net injected power to frequency.

    ``1/g = 2Hs + alpha_L + (alpha_g + K_I/s) / (tau_T s + 1)``, with the
    bracketed terms switched by the two flags.
    """
    al = area.alpha_l if include_load_damping else 0.0
    ki = area.k_i if include_secondary else 0.0
    turb = [1.0, area.tau_t]
    swing = [al, 2.0 * area.H]
    if ki:
        # multiply through by s (tau s + 1)
        inv_num = P.polyadd(P.polymul(P.polymul(swing, turb), [0.0, 1.0]), [ki, area.alpha_g])
        inv_den = P.polymul(turb, [0.0, 1.0])
    else:
        inv_num = P.polyadd(P.polymul(swing, turb), [area.alpha_g])
        inv_den = turb
    return RationalTransfer(inv_den, inv_num)


def area_state_space(area: AreaParameters, include_load_damping: bool = True,
                     include_secondary: bool = True) -> StateSpace:
    """Physical realization of :func:`open_loop_plant`.

    States are ``omega``, ``p_m`` and, with secondary control, ``z`` (the
    integral of ``omega``).  The input is the net injection ``p_b - p_L``.
    """
    al = area.alpha_l if include_load_damping else 0.0
    ki = area.k_i if include_secondary else 0.0
    m2, tau = 2.0 * area.H, area.tau_t
    if ki:
        A = [[-al / m2, 1.0 / m2, 0.0], [-area.alpha_g / tau, -1.0 / tau, -ki / tau], [1.0, 0.0, 0.0]]
        labels = ("omega", "p_m", "z")
    else:
        A = [[-al / m2, 1.0 / m2], [-area.alpha_g / tau, -1.0 / tau]]
        labels = ("omega", "p_m")
    n = len(labels)
    B = np.zeros(n)
    B[0] = 1.0 / m2
    C = np.zeros(n)
    C[0] = 1.0
    pm = np.zeros(n)
    pm[1] = 1.0
    return StateSpace(np.array(A), B, C, 0.0, labels=labels, probes=(("p_m", pm, 0.0),))


# -- multi-machine -----------------------------------------------------------


def _grouped(machines: Sequence[MachineParameters]):
    """Sum inertia and droop over machines sharing one governor model."""
    groups: dict = {}
    for m in machines:
        h, a = groups.get(m.governor, (0.0, 0.0))
        groups[m.governor] = (h + m.H, a + m.alpha_g)
    return sorted(groups.items(), key=lambda kv: repr(kv[0]))


def aggregate_multi_machine(machines: Sequence[MachineParameters]) -> RationalTransfer:
    """``g(s) = 1 / sum_i (2 H_i s + alpha_g,i T_i(s))``.

    Machines with identical governor models are pooled first so splitting a
    machine into equal shares leaves the coefficients unchanged.
    """
    if not machines:
        raise ParameterError("machines", "fleet is empty")
    groups = _grouped(machines)
    total_h = sum(m.H for m in machines)
    inv = RationalTransfer([0.0, 2.0 * total_h])
    for gov, (_, alpha) in groups:
        inv = inv + alpha * governor_tf(gov)
    return inv.reciprocal()


def multi_machine_state_space(machines: Sequence[MachineParameters], alpha_l: float = 0.0) -> StateSpace:
    """Shared-frequency realization of a machine fleet.

    States: ``omega`` followed by each machine's governor states.  Probes
    record every ``p_m_<i>`` and their sum ``p_m``.
    """
    if not machines:
        raise ParameterError("machines", "fleet is empty")
    blocks = [realize(governor_tf(m.governor)) for m in machines]
    n = 1 + sum(b.n for b in blocks)
    m2 = 2.0 * sum(m.H for m in machines)
    A = np.zeros((n, n))
    B = np.zeros(n)
    B[0] = 1.0 / m2
    A[0, 0] = -alpha_l / m2
    probes = []
    total = np.zeros(n)
    total_d = 0.0
    labels = ["omega"]
    k = 1
    for i, (mach, blk) in enumerate(zip(machines, blocks)):
        sl = slice(k, k + blk.n)
        A[sl, sl] = blk.A
        A[sl, 0] = blk.B[:, 0]
        row = np.zeros(n)
        row[sl] = -mach.alpha_g * blk.C[0]
        row[0] = -mach.alpha_g * blk.D
        # swing equation: 2 sum(H) omega' = sum p_m,i - alpha_L omega + u
        A[0] += row / m2
        probes.append((f"p_m_{i}", row, 0.0))
        total += row
        labels += [f"gov{i}_{j}" for j in range(blk.n)]
        k += blk.n
    probes.append(("p_m", total, total_d))
    C = np.zeros(n)
    C[0] = 1.0
    return StateSpace(A, B, C, 0.0, labels=tuple(labels), probes=tuple(probes))


# -- two areas ---------------------------------------------------------------


@dataclass(frozen=True)
class TwoAreaModel:
    """Two areas joined by a lossless tie line ``P12 sin(theta1 - theta2)``."""

    areas: tuple[AreaParameters, AreaParameters]
    p12_max: float
    p0_m: tuple[float, float] = (0.0, 0.0)
    p0_l: tuple[float, float] = (0.0, 0.0)
    agc_enabled: bool = False
    bias: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.areas) != 2:
            raise ParameterError("areas", "exactly two areas required")
        _positive("p12_max", self.p12_max)
        if self.bias is None:
            object.__setattr__(self, "bias", tuple(a.alpha_g + a.alpha_l for a in self.areas))
        elif self.agc_enabled:
            for k, (b, a) in enumerate(zip(self.bias, self.areas)):
                if abs(b - (a.alpha_g + a.alpha_l)) > 1e-12:
                    raise ParameterError(f"bias[{k}]", "must equal alpha_g + alpha_l with AGC enabled")
        imbalance = sum(self.p0_m) - sum(self.p0_l)
        if abs(imbalance) > 1e-9:
            raise ParameterError("p0_m/p0_l", f"nominal injections do not balance ({imbalance:+.3g} pu)")
        export = self.p0_m[0] - self.p0_l[0]
        if abs(export) >= self.p12_max:
            raise ParameterError("p12_max", "nominal transfer exceeds tie capacity")

    @property
    def delta0(self) -> float:
        """Equilibrium angle separation ``theta1 - theta2`` [rad]."""
        return math.asin((self.p0_m[0] - self.p0_l[0]) / self.p12_max)

    @property
    def gamma(self) -> float:
        """Small-signal tie stiffness ``dP12/d(theta1-theta2)`` [pu/rad]."""
        return self.p12_max * math.cos(self.delta0)


# Default two-area data: tau_T2 = 2 s, balanced nominal injections.
TWO_AREA_DEFAULT = TwoAreaModel(
    areas=(
        AreaParameters(H=6.0, tau_t=1.0, alpha_g=10.0, alpha_l=1.0, f0_hz=50.0),
        AreaParameters(H=5.5, tau_t=2.0, alpha_g=12.0, alpha_l=1.1, f0_hz=50.0),
    ),
    p12_max=1.5,
    p0_m=(0.2, 0.4),
    p0_l=(0.3, 0.3),
)


@dataclass(frozen=True)
class _ControllerBlock:
    k_d: float
    ss: StateSpace


@dataclass(frozen=True, eq=False)
class TwoAreaSystem:
    """Right-hand side of the two-area model with attached storage blocks.

    State layout: ``theta1, omega1, p_m1, theta2, omega2, p_m2``, then the AGC
    integrators ``z1, z2`` when enabled, then each area's controller states.
    Angles are in radians with ``theta' = Omega0 * omega``.  Storage blocks
    with a derivative gain ``k_d`` are folded into the swing equation.
    """

    model: TwoAreaModel
    blocks: tuple[_ControllerBlock | None, _ControllerBlock | None] = (None, None)
    linear: bool = False
    slices: tuple = field(init=False)
    n_states: int = field(init=False)

    def __post_init__(self):
        k = 8 if self.model.agc_enabled else 6
        sl = []
        for blk in self.blocks:
            n = blk.ss.n if blk is not None else 0
            sl.append(slice(k, k + n))
            k += n
        object.__setattr__(self, "slices", tuple(sl))
        object.__setattr__(self, "n_states", k)

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.model.areas[0].f0_hz

    def equilibrium(self) -> np.ndarray:
        x = np.zeros(self.n_states)
        x[0] = self.model.delta0
        return x

    def tie_flow(self, x) -> float:
        """Power from area 1 to area 2 [pu]."""
        m = self.model
        d = x[0] - x[3]
        if self.linear:
            return m.p12_max * math.sin(m.delta0) + m.gamma * (d - m.delta0)
        return m.p12_max * math.sin(d)

    def evaluate(self, x, p_l) -> tuple[np.ndarray, dict]:
        """Derivative of ``x`` under load deviations ``p_l`` plus area powers."""
        m = self.model
        dx = np.zeros_like(x)
        flow = self.tie_flow(x)
        dflow = flow - m.p12_max * math.sin(m.delta0)
        sign = (-1.0, 1.0)
        aux = {"p12": flow}
        for k, area in enumerate(m.areas):
            i = 3 * k
            omega, pm = x[i + 1], x[i + 2]
            blk = self.blocks[k]
            p_b = 0.0
            k_d = 0.0
            if blk is not None:
                xc = x[self.slices[k]]
                p_b = float(blk.ss.C[0] @ xc) + blk.ss.D * omega if blk.ss.n else blk.ss.D * omega
                k_d = blk.k_d
                if blk.ss.n:
                    dx[self.slices[k]] = blk.ss.A @ xc + blk.ss.B[:, 0] * omega
            net = (m.p0_m[k] + pm) - (m.p0_l[k] + p_l[k]) - area.alpha_l * omega + p_b + sign[k] * flow
            domega = net / (2.0 * area.H - k_d)
            p_b += k_d * domega
            secondary = 0.0
            if m.agc_enabled:
                z = x[6 + k]
                ace = m.bias[k] * omega - sign[k] * dflow
                dx[6 + k] = ace
                secondary = area.k_i * z
            dx[i] = self.omega0 * omega
            dx[i + 1] = domega
            dx[i + 2] = (-pm - area.alpha_g * omega - secondary) / area.tau_t
            aux[f"p_b_{k + 1}"] = p_b
        return dx, aux

    def rhs(self, x, p_l) -> np.ndarray:
        return self.evaluate(x, p_l)[0]


def build_two_area(model: TwoAreaModel, controllers=(None, None), linear: bool = False) -> TwoAreaSystem:
    """Assemble the two-area ODE.

    ``controllers`` holds, per area, ``None`` or a storage law as a
    :class:`~gridshape.lti.RationalTransfer` of relative degree >= -1.  With
    ``linear=True`` the sine coupling is replaced by its tangent at the
    nominal operating point.
    """
    blocks = []
    for c in controllers:
        if c is None:
            blocks.append(None)
            continue
        k_d, rest = split_derivative(c)
        blocks.append(_ControllerBlock(k_d, realize(rest)))
    return TwoAreaSystem(model, tuple(blocks), linear)
