"""Fixed-step RK4 simulation of storage-controlled power systems.

The storage law may contain a pure derivative term (unfiltered inertia
emulation).  Such a term is solved algebraically together with the swing
equation, which amounts to adding the emulated inertia to ``2H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .controllers import ControllerSpec
from .errors import DegenerateLoopError, DivergenceError, LossOfSynchronismError, ParameterError
from .lti import RationalTransfer, StateSpace, Trajectory, realize, rk4_lti, rk4_step, running_trapezoid, split_derivative
from .plant import TwoAreaModel, build_two_area

ControllerLike = Union[ControllerSpec, RationalTransfer, StateSpace, None]


@dataclass(frozen=True)
class DisturbanceSpec:
    """Load step of ``magnitude`` pu applied to one area at ``start_time``.

    A positive magnitude is a generation loss (load increase).
    """

    magnitude: float
    area_index: int = 0
    start_time: float = 1.0
    kind: str = "step"

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise ParameterError("magnitude", f"must be finite, got {self.magnitude!r}")
        if self.kind != "step":
            raise ParameterError("kind", f"only 'step' disturbances are supported, got {self.kind!r}")
        if not (math.isfinite(self.start_time) and self.start_time >= 0):
            raise ParameterError("start_time", f"must be >= 0, got {self.start_time!r}")
        if self.area_index < 0:
            raise ParameterError("area_index", f"must be >= 0, got {self.area_index!r}")

    def load(self, t: np.ndarray, dt: float) -> np.ndarray:
        """Sampled load deviation, right-continuous at the step."""
        return np.where(np.asarray(t) >= self.start_time - 1e-9 * dt, self.magnitude, 0.0)


def _grid(dt: float, horizon: float) -> tuple[int, np.ndarray]:
    if not (dt > 0 and math.isfinite(dt)):
        raise ParameterError("dt", f"must be > 0, got {dt!r}")
    if not (horizon >= dt and math.isfinite(horizon)):
        raise ParameterError("horizon", f"must be >= dt, got {horizon!r}")
    n = int(round(horizon / dt))
    return n, dt * np.arange(n + 1)


def _as_block(c: ControllerLike, filtered: bool) -> tuple[float, StateSpace] | None:
    if c is None:
        return None
    if isinstance(c, ControllerSpec):
        c = c.law(filtered)
    if isinstance(c, StateSpace):
        return 0.0, c
    if isinstance(c, RationalTransfer):
        k_d, rest = split_derivative(c)
        return k_d, realize(rest)
    raise TypeError(f"unsupported controller type {type(c).__name__}")


def simulate_closed_loop(plant: StateSpace, controller: ControllerLike | Sequence[ControllerLike],
                         dist: DisturbanceSpec, dt: float = 1e-3, horizon: float = 60.0,
                         filtered: bool = True) -> Trajectory:
    """Simulate a single-area loop under a load step.

    Parameters
    ----------
    plant : StateSpace
        Strictly proper plant; input is net injection ``p_b - p_L``, output
        is ``omega``.  Its probes are recorded.
    controller
        A storage law, a list of laws acting in parallel on ``omega`` (each
        recorded as ``p_b_<i>``), or ``None``.
    filtered : bool
        For :class:`ControllerSpec` inputs, use the low-pass version.

    Returns
    -------
    Trajectory
        ``omega``, ``omega_dot``, ``p_l``, ``p_b``, ``E_b`` (trapezoid of the
        sampled ``p_b``), ``E_b_ode`` (co-integrated state) and plant probes
        such as ``p_m``.
    """
    if dist.area_index != 0:
        raise ParameterError("area_index", "single-area loop only has area 0")
    if plant.D != 0.0:
        raise ParameterError("plant", "plant must be strictly proper")
    n_steps, t = _grid(dt, horizon)
    many = isinstance(controller, (list, tuple))
    raw = list(controller) if many else [controller]
    blocks = [_as_block(c, filtered) for c in raw]

    n_p = plant.n
    Ap, Bp, Cp = plant.A, plant.B[:, 0], plant.C[0]
    sizes = [b[1].n if b else 0 for b in blocks]
    N = n_p + sum(sizes) + 1
    slices = []
    k = n_p
    for m in sizes:
        slices.append(slice(k, k + m))
        k += m

    K = sum(b[0] for b in blocks if b)
    CB = float(Cp @ Bp)
    den = 1.0 - K * CB
    if abs(den) < 1e-12:
        raise DegenerateLoopError("derivative gain cancels the plant inertia")
    CA = np.zeros(N)
    CA[:n_p] = Cp @ Ap
    r_row = np.zeros(N)
    for b, sl in zip(blocks, slices):
        if b:
            r_row[sl] += b[1].C[0]
            r_row[:n_p] += b[1].D * Cp
    pb_row = (K * CA + r_row) / den
    pb_w = -K * CB / den

    A = np.zeros((N, N))
    Bw = np.zeros(N)
    A[:n_p, :n_p] = Ap
    A[:n_p] += np.outer(Bp, pb_row)
    Bw[:n_p] = Bp * (pb_w - 1.0)
    for b, sl in zip(blocks, slices):
        if b and b[1].n:
            A[sl, sl] += b[1].A
            A[sl, :n_p] += np.outer(b[1].B[:, 0], Cp)
    A[-1] = pb_row
    Bw[-1] = pb_w

    p_l = dist.load(t, dt)
    X = rk4_lti(A, Bw, np.zeros(N), p_l[:-1], dt)
    if not np.all(np.isfinite(X)):
        raise DivergenceError("non-finite state")

    xp = X[:, :n_p]
    y = xp @ Cp
    y_dot = (X @ A[:n_p].T + np.outer(p_l, Bw[:n_p])) @ Cp
    p_b = X @ pb_row + pb_w * p_l
    u = p_b - p_l
    sig = {"omega": y, "omega_dot": y_dot, "p_l": p_l, "p_b": p_b}
    for name, row, d in plant.probes:
        sig[name] = xp @ row + d * u
    if many:
        for i, (b, sl) in enumerate(zip(blocks, slices), start=1):
            if b:
                pbi = b[0] * y_dot + X[:, sl] @ b[1].C[0] + b[1].D * y
            else:
                pbi = np.zeros_like(y)
            sig[f"p_b_{i}"] = pbi
            sig[f"E_b_{i}"] = running_trapezoid(pbi, dt)
    sig["E_b"] = running_trapezoid(p_b, dt)
    sig["E_b_ode"] = X[:, -1]
    return Trajectory(dt, sig)


def simulate_two_area(model: TwoAreaModel, controllers: Sequence[ControllerLike] = (None, None),
                      dist: DisturbanceSpec | None = None, dt: float = 5e-3, horizon: float = 60.0,
                      linear: bool = False, filtered: bool = True) -> Trajectory:
    """Simulate the sine-coupled two-area model.

    Signals per area ``k`` (1-based): ``omega_k``, ``omega_dot_k``, ``p_m_k``,
    ``p_b_k``, ``E_b_k``, ``p_l_k``; plus ``omega`` and ``omega_dot`` at the
    centre of inertia, ``p12`` (area 1 to 2), ``delta`` (angle separation),
    and fleet totals ``p_b`` and ``E_b``.

    Raises
    ------
    LossOfSynchronismError
        If the angle separation leaves ``(-pi/2, pi/2)``.
    """
    dist = dist if dist is not None else DisturbanceSpec(0.0)
    if dist.area_index not in (0, 1):
        raise ParameterError("area_index", f"must be 0 or 1, got {dist.area_index!r}")
    if len(controllers) != 2:
        raise ParameterError("controllers", "need one entry per area")
    laws = []
    for c in controllers:
        if isinstance(c, ControllerSpec):
            c = c.law(filtered)
        if isinstance(c, StateSpace):
            raise TypeError("two-area controllers must be transfer functions")
        laws.append(c)
    system = build_two_area(model, tuple(laws), linear=linear)

    n_steps, t = _grid(dt, horizon)
    load = dist.load(t, dt)
    loads = np.zeros((n_steps + 1, 2))
    loads[:, dist.area_index] = load
    X = np.empty((n_steps + 1, system.n_states))
    x = system.equilibrium()
    X[0] = x
    limit = 0.5 * math.pi
    for k in range(n_steps):
        pl = loads[k]
        x = rk4_step(lambda _t, z: system.rhs(z, pl), t[k], x, dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k + 1}")
        if abs(x[0] - x[3]) >= limit:
            raise LossOfSynchronismError(
                f"angle separation {x[0] - x[3]:+.3f} rad at t = {t[k + 1]:.3f} s"
            )
        X[k + 1] = x

    sig: dict[str, np.ndarray] = {}
    dX = np.empty_like(X)
    aux = {"p12": np.empty(n_steps + 1), "p_b_1": np.empty(n_steps + 1), "p_b_2": np.empty(n_steps + 1)}
    for k in range(n_steps + 1):
        dX[k], a = system.evaluate(X[k], loads[k])
        for name in aux:
            aux[name][k] = a[name]
    H = [a.H for a in model.areas]
    for k in range(2):
        i = 3 * k
        sig[f"omega_{k + 1}"] = X[:, i + 1]
        sig[f"omega_dot_{k + 1}"] = dX[:, i + 1]
        sig[f"p_m_{k + 1}"] = X[:, i + 2]
        sig[f"p_b_{k + 1}"] = aux[f"p_b_{k + 1}"]
        sig[f"E_b_{k + 1}"] = running_trapezoid(aux[f"p_b_{k + 1}"], dt)
        sig[f"p_l_{k + 1}"] = loads[:, k]
    sig["omega"] = (H[0] * X[:, 1] + H[1] * X[:, 4]) / (H[0] + H[1])
    sig["omega_dot"] = (H[0] * dX[:, 1] + H[1] * dX[:, 4]) / (H[0] + H[1])
    sig["p12"] = aux["p12"]
    sig["delta"] = X[:, 0] - X[:, 3]
    sig["p_b"] = sig["p_b_1"] + sig["p_b_2"]
    sig["E_b"] = sig["E_b_1"] + sig["E_b_2"]
    return Trajectory(dt, sig)
