"""SISO linear time-invariant numerics.

Transfer functions are stored as ratios of real polynomials in ``s`` with
coefficients in *ascending* powers (``num[k]`` multiplies ``s**k``), the same
convention as :mod:`numpy.polynomial.polynomial`.  Denominators are normalized
so that their leading (highest-power) coefficient is one.

State-space models use the usual ``x' = A x + B u, y = C x + D u`` form with a
scalar input and output.  Time integration is the classical fixed-step
fourth-order Runge-Kutta scheme throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import linalg

from .errors import (
    DegenerateLoopError,
    DivergenceError,
    IllConditionedError,
    ImproperTransferError,
    InstabilityError,
    InvalidCoefficientError,
    NonMinimalError,
    PoleEvaluationError,
)

__all__ = [
    "RationalTransfer",
    "StateSpace",
    "Trajectory",
    "tf_arith",
    "tf_evaluate",
    "closed_loop",
    "cancel_factor",
    "final_step_value",
    "initial_step_rate",
    "realize",
    "transfer",
    "split_derivative",
    "freq_response",
    "lyapunov_solve",
    "balanced_truncation",
    "rk4_propagator",
    "rk4_lti",
    "rk4",
    "step_response",
    "running_trapezoid",
]

_TRIM_RTOL = 1e-13
_STABILITY_MARGIN = 1e-9


def _trim(c: np.ndarray) -> np.ndarray:
    """Drop negligible highest-power coefficients, keeping at least one."""
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(1)
    keep = len(c)
    while keep > 1 and abs(c[keep - 1]) <= _TRIM_RTOL * scale:
        keep -= 1
    return c[:keep]


def _as_coeffs(c) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float)).ravel().copy()
    if not np.all(np.isfinite(arr)):
        raise InvalidCoefficientError(f"non-finite coefficient in {arr!r}")
    return arr


class RationalTransfer:
    """Ratio ``num(s) / den(s)`` of real polynomials (ascending coefficients).

    Instances are immutable.  Arithmetic is exact polynomial arithmetic; no
    pole-zero cancellation is attempted (see :func:`cancel_factor`).

    >>> h = RationalTransfer([1.0], [15.0, 4.38])
    >>> round(h(0).real, 6)
    0.066667
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=(1.0,)):
        num = _as_coeffs(num)
        den = _trim(_as_coeffs(den))
        if den[-1] == 0.0:
            raise InvalidCoefficientError("denominator is the zero polynomial")
        lead = den[-1]
        num = _trim(num / lead)
        den = den / lead
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise InvalidCoefficientError("coefficient overflow during normalization")
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __setattr__(self, name, value):
        raise AttributeError("RationalTransfer is immutable")

    # -- structure ---------------------------------------------------------
    @classmethod
    def gain(cls, k: float) -> "RationalTransfer":
        return cls([k], [1.0])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.num == 0.0))

    @property
    def num_degree(self) -> int:
        return -1 if self.is_zero else len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return len(self.den) - 1

    @property
    def relative_degree(self) -> int:
        """``deg(den) - deg(num)``; the zero function counts as ``deg(den) + 1``."""
        return self.den_degree - self.num_degree

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def poles(self) -> np.ndarray:
        return P.polyroots(self.den) if self.den_degree else np.zeros(0, complex)

    def dc_gain(self) -> float:
        return float(tf_evaluate(self, 0.0).real)

    def __call__(self, s):
        return tf_evaluate(self, s)

    # -- arithmetic --------------------------------------------------------
    @staticmethod
    def _coerce(other) -> "RationalTransfer":
        if isinstance(other, RationalTransfer):
            return other
        if np.isscalar(other) and np.isreal(other):
            return RationalTransfer.gain(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        num = P.polyadd(P.polymul(self.num, other.den), P.polymul(other.num, self.den))
        return RationalTransfer(num, P.polymul(self.den, other.den))

    __radd__ = __add__

    def __neg__(self):
        return RationalTransfer(-self.num, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return RationalTransfer(P.polymul(self.num, other.num), P.polymul(self.den, other.den))

    __rmul__ = __mul__

    def reciprocal(self) -> "RationalTransfer":
        if self.is_zero:
            raise DegenerateLoopError("reciprocal of the zero transfer function")
        return RationalTransfer(self.den, self.num)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    # -- comparison helpers -----------------------------------------------
    def allclose(self, other: "RationalTransfer", rtol=1e-9, atol=1e-12) -> bool:
        """Coefficient-wise comparison after normalization."""
        if len(self.num) != len(other.num) or len(self.den) != len(other.den):
            return False
        return bool(
            np.allclose(self.num, other.num, rtol=rtol, atol=atol)
            and np.allclose(self.den, other.den, rtol=rtol, atol=atol)
        )

    def __repr__(self):
        return f"RationalTransfer(num={self.num.tolist()}, den={self.den.tolist()})"


def tf_arith(kind: str, lhs, rhs) -> RationalTransfer:
    """Dispatch ``add``, ``mul``, ``scale`` or ``neg`` on transfer functions.

    ``scale`` accepts the scalar on either side; ``neg`` ignores ``rhs``.
    """
    if kind == "add":
        return RationalTransfer._coerce(lhs) + rhs
    if kind == "mul":
        return RationalTransfer._coerce(lhs) * rhs
    if kind == "scale":
        if isinstance(lhs, RationalTransfer):
            lhs, rhs = rhs, lhs
        return RationalTransfer(float(lhs) * rhs.num, rhs.den)
    if kind == "neg":
        return -RationalTransfer._coerce(lhs)
    raise ValueError(f"unknown arithmetic kind {kind!r}")


def tf_evaluate(tf: RationalTransfer, s):
    """Evaluate ``tf`` at complex frequency ``s`` (scalar or array)."""
    s = np.asarray(s, dtype=complex)
    den = P.polyval(s, tf.den)
    if np.any(np.abs(den) < 1e-300):
        raise PoleEvaluationError(f"evaluation at a pole of {tf!r}")
    out = P.polyval(s, tf.num) / den
    return out.item() if out.ndim == 0 else out


def cancel_factor(tf: RationalTransfer, factor, tol: float = 1e-9) -> RationalTransfer:
    """Remove every common occurrence of polynomial ``factor`` from ``tf``.

    A division is only accepted when its remainder norm is below
    ``tol * ||dividend||`` for both numerator and denominator.
    """
    factor = _trim(_as_coeffs(factor))
    if len(factor) < 2:
        return tf
    num, den = np.array(tf.num), np.array(tf.den)
    while len(num) >= len(factor) and len(den) >= len(factor) and not tf.is_zero:
        qn, rn = P.polydiv(num, factor)
        qd, rd = P.polydiv(den, factor)
        if np.linalg.norm(rn) > tol * np.linalg.norm(num) or np.linalg.norm(rd) > tol * np.linalg.norm(den):
            break
        num, den = qn, qd
    return RationalTransfer(num, den)


def closed_loop(plant_g: RationalTransfer, storage_c: RationalTransfer, cancel=None) -> RationalTransfer:
    """Disturbance-to-frequency map ``1 / (1/g - c)`` of the storage loop.

    Given ``g = Ng/Dg`` and ``c = Nc/Dc`` this returns
    ``Ng Dc / (Dg Dc - Nc Ng)``.  When ``cancel`` is a polynomial, its common
    occurrences are divided out of the result (used for the shaping law,
    whose identity relies on cancelling the turbine lag).
    """
    storage_c = RationalTransfer._coerce(storage_c)
    den = P.polysub(P.polymul(plant_g.den, storage_c.den), P.polymul(storage_c.num, plant_g.num))
    if np.all(_trim(den) == 0.0):
        raise DegenerateLoopError("1/g - c is identically zero")
    h = RationalTransfer(P.polymul(plant_g.num, storage_c.den), den)
    if cancel is not None:
        h = cancel_factor(h, cancel)
    return h


def _require_stable(tf: RationalTransfer) -> None:
    if tf.den_degree == 0:
        return
    eig = np.linalg.eigvals(realize(tf).A) if tf.is_proper else tf.poles()
    if np.max(eig.real) >= -_STABILITY_MARGIN:
        raise InstabilityError(f"pole with real part {np.max(eig.real):.3g} >= 0 in {tf!r}")


def final_step_value(tf: RationalTransfer) -> float:
    """Limit of the unit-step response, ``tf(0)``, for a stable proper ``tf``."""
    if not tf.is_proper:
        raise ImproperTransferError("final value requires a proper transfer function")
    _require_stable(tf)
    return tf.dc_gain()


def initial_step_rate(tf: RationalTransfer) -> float:
    """Initial slope of the unit-step response, ``lim s->inf s*tf(s)``."""
    rd = tf.relative_degree
    if rd <= 0:
        raise ImproperTransferError(
            f"relative degree {rd}: the step response has an unbounded initial rate"
        )
    if rd >= 2:
        return 0.0
    return float(tf.num[-1] / tf.den[-1])


def split_derivative(tf: RationalTransfer) -> tuple[float, RationalTransfer]:
    """Write ``tf = k_d * s + rest`` with ``rest`` proper.

    Only relative degree >= -1 is supported; ``k_d`` is zero for proper input.
    """
    rd = tf.relative_degree
    if rd >= 0:
        return 0.0, tf
    if rd < -1:
        raise ImproperTransferError(f"relative degree {rd} < -1 cannot be simulated")
    q, r = P.polydiv(np.array(tf.num), np.array(tf.den))
    k_d = float(q[1])
    rest = RationalTransfer(P.polyadd(P.polymul([q[0]], tf.den), r), tf.den)
    return k_d, rest


# ---------------------------------------------------------------------------
# State space
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateSpace:
    """SISO realization ``(A, B, C, D)``.

    ``labels`` optionally names the states; ``probes`` holds extra output
    rows ``(name, c_row, d)`` that simulations record alongside ``y``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    labels: tuple[str, ...] = ()
    probes: tuple[tuple[str, np.ndarray, float], ...] = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = 0 if A.size == 0 else A.shape[0]
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, 1)
        C = np.asarray(self.C, dtype=float).reshape(1, n)
        for name, arr in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(arr)):
                raise InvalidCoefficientError(f"non-finite entry in {name}")
            arr.setflags(write=False)
        if self.labels and len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for {n} states")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(self.D))
        probes = tuple((str(nm), np.asarray(c, float).reshape(n), float(d)) for nm, c, d in self.probes)
        object.__setattr__(self, "probes", probes)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def evaluate(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
        out = np.empty(s_arr.shape, dtype=complex)
        eye = np.eye(self.n)
        for k, sk in enumerate(s_arr.flat):
            if self.n:
                out.flat[k] = (self.C @ np.linalg.solve(sk * eye - self.A, self.B)).item() + self.D
            else:
                out.flat[k] = self.D
        return out.item() if np.ndim(s) == 0 else out

    __call__ = evaluate

    def is_stable(self) -> bool:
        return self.n == 0 or bool(np.max(np.linalg.eigvals(self.A).real) < 0.0)


def realize(tf: RationalTransfer) -> StateSpace:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise ImproperTransferError(f"cannot realize improper {tf!r}")
    n = tf.den_degree
    num = np.zeros(n + 1)
    num[: len(tf.num)] = tf.num
    D = num[n]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D)
    b = num[:n] - D * tf.den[:n]
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -tf.den[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    return StateSpace(A, B, b.reshape(1, n), D)


def transfer(ss: StateSpace) -> RationalTransfer:
    """Transfer function of a SISO realization.

    Uses ``det(sI - A + BC) = det(sI - A) * (1 + C (sI - A)^-1 B)``.
    """
    if ss.n == 0:
        return RationalTransfer.gain(ss.D)
    den = np.poly(ss.A)[::-1].real
    shifted = np.poly(ss.A - ss.B @ ss.C)[::-1].real
    num = shifted - den + ss.D * den
    return RationalTransfer(num, den)


def freq_response(sys, w) -> np.ndarray:
    """Complex response at angular frequencies ``w`` (rad/s)."""
    s = 1j * np.asarray(w, dtype=float)
    if isinstance(sys, RationalTransfer):
        return np.atleast_1d(sys(s))
    return np.atleast_1d(sys.evaluate(s))


# ---------------------------------------------------------------------------
# Gramians and model reduction
# ---------------------------------------------------------------------------


def lyapunov_solve(A, Q) -> np.ndarray:
    """Solve ``A P + P A^T + Q = 0`` for Hurwitz ``A``.

    Raises
    ------
    InstabilityError
        If ``A`` has an eigenvalue with non-negative real part.
    IllConditionedError
        If the residual Frobenius norm exceeds ``1e-8 * ||Q||``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.size and np.max(np.linalg.eigvals(A).real) >= 0.0:
        raise InstabilityError("Lyapunov solve requires a Hurwitz matrix")
    Pm = linalg.solve_continuous_lyapunov(A, -Q)
    Pm = 0.5 * (Pm + Pm.T)
    resid = np.linalg.norm(A @ Pm + Pm @ A.T + Q)
    if resid > 1e-8 * max(np.linalg.norm(Q), np.finfo(float).tiny):
        raise IllConditionedError(f"Lyapunov residual {resid:.3g} too large")
    return Pm


def balanced_truncation(ss: StateSpace, r: int) -> tuple[StateSpace, np.ndarray]:
    """Square-root balanced truncation to order ``r``.

    Returns the reduced model and all Hankel singular values in descending
    order.  The reduced model satisfies
    ``||G - G_r||_inf <= 2 * sum(hsv[r:])``.
    """
    n = ss.n
    if not 0 <= r <= n:
        raise ValueError(f"target order {r} outside [0, {n}]")
    if not ss.is_stable():
        raise InstabilityError("balanced truncation requires an asymptotically stable model")
    if n == 0:
        return ss, np.zeros(0)
    Wc = lyapunov_solve(ss.A, ss.B @ ss.B.T)
    Wo = lyapunov_solve(ss.A.T, ss.C.T @ ss.C)
    try:
        Lc = linalg.cholesky(Wc, lower=True)
        Lo = linalg.cholesky(Wo, lower=True)
    except linalg.LinAlgError as exc:
        raise NonMinimalError("gramian is not positive definite") from exc
    U, hsv, Vt = linalg.svd(Lo.T @ Lc)
    if hsv[-1] < 1e-12 * hsv[0]:
        raise NonMinimalError(f"smallest Hankel value {hsv[-1]:.3g} is negligible")
    scale = 1.0 / np.sqrt(hsv)
    T = Lc @ Vt.T * scale
    Ti = (scale[:, None] * U.T) @ Lo.T
    Ab, Bb, Cb = Ti @ ss.A @ T, Ti @ ss.B, ss.C @ T
    red = StateSpace(Ab[:r, :r], Bb[:r], Cb[:, :r], ss.D)
    return red, hsv


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def rk4_propagator(A, B, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One classical RK4 step of ``x' = A x + B u`` with ``u`` held constant.

    For linear dynamics the four stages collapse to
    ``x+ = Phi x + Gamma u`` with ``Phi = sum_{k<=4} (hA)^k / k!`` and
    ``Gamma = h sum_{k<=3} (hA)^k / (k+1)! B``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    hA = dt * A
    eye = np.eye(n)
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    Phi = eye + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    Gamma = dt * (eye + hA / 2 + hA2 / 6 + hA3 / 24) @ B
    return Phi, Gamma


def rk4_lti(A, B, x0, u, dt: float, block: int = 4096) -> np.ndarray:
    """States at every sample of an LTI system under piecewise-constant input.

    ``u[k]`` (scalar) acts on ``[t_k, t_{k+1})``; the result has
    ``len(u) + 1`` rows.  Runs of constant input are propagated with
    precomputed powers of the RK4 step matrix, which reproduces step-by-step
    RK4 up to rounding but runs at array speed.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    u = np.asarray(u, dtype=float).ravel()
    N = len(u)
    X = np.empty((N + 1, n))
    X[0] = np.asarray(x0, dtype=float).reshape(n)
    if n == 0 or N == 0:
        return X
    Phi, Gamma = rk4_propagator(A, B, dt)
    Gamma = Gamma[:, 0]
    L = min(block, N)
    powers = np.empty((L + 1, n, n))
    sums = np.empty((L + 1, n))
    powers[0] = np.eye(n)
    sums[0] = 0.0
    edges = np.flatnonzero(np.diff(u)) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [N]))
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, L + 1):
            powers[j] = Phi @ powers[j - 1]
            sums[j] = Phi @ sums[j - 1] + Gamma
        for a, b in zip(starts, stops):
            uk = u[a]
            k = a
            while k < b:
                m = min(L, b - k)
                X[k + 1 : k + m + 1] = powers[1 : m + 1] @ X[k] + sums[1 : m + 1] * uk
                k += m
                if not np.all(np.isfinite(X[k])):
                    rho = float(np.max(np.abs(np.linalg.eigvals(Phi))))
                    raise DivergenceError(
                        f"non-finite state by step {k}; RK4 step matrix spectral radius {rho:.4g}"
                        + (" (loop unstable or dt too large)" if rho > 1.0 else "")
                    )
    return X


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """Single classical RK4 step from ``(t, x)``."""
    half = 0.5 * dt
    k1 = f(t, x)
    k2 = f(t + half, x + half * k1)
    k3 = f(t + half, x + half * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(f: Callable[[float, np.ndarray], np.ndarray], x0, dt: float, n_steps: int) -> np.ndarray:
    """Generic classical RK4; returns ``n_steps + 1`` state rows."""
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for k in range(n_steps):
        x = rk4_step(f, k * dt, x, dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k + 1}")
        out[k + 1] = x
    return out


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled named signals sharing one time grid ``t0 + k*dt``."""

    dt: float
    signals: Mapping[str, np.ndarray]
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        sig = {k: np.asarray(v, dtype=float) for k, v in self.signals.items()}
        lengths = {len(v) for v in sig.values()}
        if len(lengths) > 1:
            raise ValueError(f"signals have differing lengths {sorted(lengths)}")
        for v in sig.values():
            v.setflags(write=False)
        object.__setattr__(self, "signals", sig)

    def __len__(self):
        return len(next(iter(self.signals.values()))) if self.signals else 0

    def __getitem__(self, name) -> np.ndarray:
        return self.signals[name]

    def __contains__(self, name):
        return name in self.signals

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


def step_response(ss: StateSpace, input_magnitude: float = 1.0, dt: float = 1e-3, horizon: float = 60.0) -> Trajectory:
    """RK4 response to ``input_magnitude * 1(t)`` with a numerical derivative.

    Signals: ``u``, ``y`` and ``y_dot`` (central differences).
    """
    if not dt > 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n_steps = int(round(horizon / dt))
    u = np.full(n_steps, float(input_magnitude))
    X = rk4_lti(ss.A, ss.B, np.zeros(ss.n), u, dt)
    y = X @ ss.C[0] + ss.D * input_magnitude
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite output")
    return Trajectory(dt, {"u": np.full(n_steps + 1, float(input_magnitude)), "y": y, "y_dot": np.gradient(y, dt)})


def running_trapezoid(y: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid integral of ``y`` starting from zero."""
    out = np.zeros_like(np.asarray(y, dtype=float))
    if len(out) > 1:
        out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    return out
