import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, signal

from gridshape.errors import (DegenerateLoopError, DivergenceError, IllConditionedError, ImproperTransferError,
                              InstabilityError, InvalidCoefficientError, NonMinimalError, PoleEvaluationError)
from gridshape.lti import (RationalTransfer, StateSpace, Trajectory, balanced_truncation, cancel_factor,
                           closed_loop, final_step_value, freq_response, initial_step_rate, lyapunov_solve,
                           realize, rk4, rk4_lti, rk4_propagator, running_trapezoid, split_derivative,
                           step_response, tf_arith, tf_evaluate, transfer)
from gridshape.plant import IEEEG1, governor_tf

coef = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
s_points = np.array([0.3 + 0.7j, -0.2 + 2.0j, 1.5 - 0.4j, 3.0j])


def random_stable_tf(rng, n=None, rel=1):
    n = n or int(rng.integers(1, 5))
    poles = []
    while len(poles) < n:
        if n - len(poles) >= 2 and rng.random() < 0.5:
            re, im = -rng.uniform(0.2, 3.0), rng.uniform(0.1, 3.0)
            poles += [re + 1j * im, re - 1j * im]
        else:
            poles.append(-rng.uniform(0.2, 3.0))
    den = np.real(np.poly(poles))[::-1]
    num = rng.uniform(-2, 2, size=n - rel + 1)
    num[-1] = rng.uniform(0.5, 2.0)
    return RationalTransfer(num, den)


# -- rational transfer functions ---------------------------------------------------


def test_normalization_and_trim():
    h = RationalTransfer([2.0, 0.0, 0.0], [30.0, 8.76])
    assert h.den[-1] == 1.0
    assert h.num_degree == 0
    assert h.den_degree == 1
    assert h.relative_degree == 1
    assert h(0) == pytest.approx(1 / 15)


def test_first_order_example():
    h = RationalTransfer([1.0], [15.0, 4.38])
    assert h(0).real == pytest.approx(0.0666667, rel=1e-6)
    assert h.poles()[0].real == pytest.approx(-15 / 4.38)


def test_invalid_coefficients():
    with pytest.raises(InvalidCoefficientError):
        RationalTransfer([np.nan], [1.0])
    with pytest.raises(InvalidCoefficientError):
        RationalTransfer([1.0], [0.0, 0.0])
    with pytest.raises(AttributeError):
        RationalTransfer([1.0]).num = np.zeros(1)


def test_evaluation_at_pole():
    h = RationalTransfer([1.0], [1.0, 1.0])
    with pytest.raises(PoleEvaluationError):
        h(-1.0)


def test_zero_transfer_structure():
    z = RationalTransfer.gain(0.0)
    assert z.is_zero
    assert z.num_degree == -1
    assert z.is_proper
    with pytest.raises(DegenerateLoopError):
        z.reciprocal()


@settings(max_examples=50, deadline=None)
@given(st.lists(coef, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=3),
       st.lists(coef, min_size=1, max_size=4), st.lists(coef, min_size=1, max_size=3))
def test_arithmetic_matches_pointwise(n1, d1, n2, d2):
    d1 = d1 + [1.0]
    d2 = d2 + [1.0]
    a = RationalTransfer(n1, d1)
    b = RationalTransfer(n2, d2)
    for s in s_points:
        try:
            av, bv = a(s), b(s)
        except PoleEvaluationError:
            continue
        if abs(av) > 1e6 or abs(bv) > 1e6:
            continue
        tol = 1e-7 * (1 + abs(av) + abs(bv)) ** 2
        assert abs((a + b)(s) - (av + bv)) < tol
        assert abs((a * b)(s) - av * bv) < tol
        assert abs((a - b)(s) - (av - bv)) < tol
        assert abs(tf_arith("scale", 2.5, a)(s) - 2.5 * av) < tol


def test_tf_arith_dispatch():
    a = RationalTransfer([1.0], [1.0, 1.0])
    assert tf_arith("neg", a, None).allclose(-a)
    assert tf_arith("add", a, 1.0)(0.0) == pytest.approx(2.0)
    assert tf_arith("mul", 3.0, a)(0.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        tf_arith("pow", a, a)


def test_closed_loop_with_zero_controller_is_plant():
    g = RationalTransfer([1.0, 1.0], [15.0, 4.38, 4.38])
    assert closed_loop(g, RationalTransfer.gain(0.0)).allclose(g)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 50), st.floats(0, 20), st.floats(0, 60))
def test_closed_loop_pointwise(H, alpha, alpha_b, m):
    g = RationalTransfer([1.0, 1.0], [alpha, 2 * H, 2 * H])
    c = RationalTransfer([-alpha_b, -m])
    h = closed_loop(g, c)
    for s in s_points:
        expected = 1.0 / (1.0 / g(s) - c(s))
        assert abs(h(s) - expected) <= 1e-9 * (1 + abs(expected))


def test_closed_loop_degenerate():
    g = RationalTransfer([1.0], [0.0, 1.0])
    with pytest.raises(DegenerateLoopError):
        closed_loop(g, RationalTransfer([0.0, 1.0]))


def test_cancel_factor_removes_repeated_factor():
    base = RationalTransfer([1.0], [15.0, 4.38])
    f = np.array([1.0, 2.0])
    lifted = RationalTransfer(np.polynomial.polynomial.polymul(base.num, np.polynomial.polynomial.polymul(f, f)),
                              np.polynomial.polynomial.polymul(base.den, np.polynomial.polynomial.polymul(f, f)))
    assert lifted.den_degree == 3
    assert cancel_factor(lifted, f).allclose(base)
    # a non-factor leaves the function untouched
    assert cancel_factor(base, [3.0, 1.0]).allclose(base)


def test_limits():
    h = RationalTransfer([1.0], [15.0, 4.38])
    assert final_step_value(h) == pytest.approx(1 / 15, rel=1e-12)
    assert initial_step_rate(h) == pytest.approx(1 / 4.38, rel=1e-12)
    assert initial_step_rate(RationalTransfer([1.0], [1.0, 1.0, 1.0])) == 0.0
    with pytest.raises(ImproperTransferError):
        initial_step_rate(RationalTransfer([1.0, 1.0], [1.0, 1.0]))
    with pytest.raises(ImproperTransferError):
        final_step_value(RationalTransfer([0.0, 1.0]))
    with pytest.raises(InstabilityError):
        final_step_value(RationalTransfer([1.0], [-1.0, 1.0]))
    with pytest.raises(InstabilityError):
        final_step_value(RationalTransfer([1.0], [0.0, 1.0]))


def test_split_derivative():
    k_d, rest = split_derivative(RationalTransfer([-5.0, -55.62]))
    assert k_d == pytest.approx(-55.62)
    assert rest.allclose(RationalTransfer.gain(-5.0))
    tf = RationalTransfer([-1.0, -3.0, -2.0], [1.0, 1.0])
    k_d, rest = split_derivative(tf)
    for s in s_points:
        assert abs(k_d * s + rest(s) - tf(s)) < 1e-12 * (1 + abs(tf(s)))
    assert rest.is_proper
    with pytest.raises(ImproperTransferError):
        split_derivative(RationalTransfer([0.0, 0.0, 1.0]))


# -- realizations -------------------------------------------------------------------


def test_realize_ieeeg1():
    tf = governor_tf(IEEEG1())
    ss = realize(tf)
    assert ss.n == 4
    assert ss.D == 0.0
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 3, 20) + 1j * rng.uniform(-3, 3, 20)
    np.testing.assert_allclose(ss(pts), tf_evaluate(tf, pts), rtol=1e-9, atol=1e-12)


def test_realize_rejects_improper():
    with pytest.raises(ImproperTransferError):
        realize(RationalTransfer([0.0, 1.0]))


def test_realize_transfer_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(20):
        tf = random_stable_tf(rng, rel=int(rng.integers(0, 2)))
        back = transfer(realize(tf))
        for s in s_points:
            assert abs(back(s) - tf(s)) < 1e-8 * (1 + abs(tf(s)))


def test_transfer_of_balanced_model_matches_evaluation():
    ss = realize(governor_tf(IEEEG1()))
    red, _ = balanced_truncation(ss, 2)
    tr = transfer(red)
    for s in s_points:
        assert abs(tr(s) - red(s)) < 1e-10


def test_statespace_validation():
    with pytest.raises(InvalidCoefficientError):
        StateSpace([[np.inf]], [1.0], [1.0])
    with pytest.raises(ValueError):
        StateSpace([[-1.0]], [1.0], [1.0], labels=("a", "b"))


# -- gramians and balanced truncation ---------------------------------------------


def _kron_lyapunov(A, Q):
    """Dense vectorized solve, independent of Bartels-Stewart."""
    n = A.shape[0]
    K = np.kron(np.eye(n), A) + np.kron(A, np.eye(n))
    return np.linalg.solve(K, -Q.reshape(-1, order="F")).reshape(n, n, order="F")


def test_lyapunov_against_kronecker_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        ss = realize(random_stable_tf(rng, n=4))
        Q = ss.B @ ss.B.T
        np.testing.assert_allclose(lyapunov_solve(ss.A, Q), _kron_lyapunov(ss.A, Q), rtol=1e-7, atol=1e-10)


def test_lyapunov_rejects_unstable():
    with pytest.raises(InstabilityError):
        lyapunov_solve(np.array([[0.5]]), np.eye(1))


def test_lyapunov_residual_check(monkeypatch):
    monkeypatch.setattr(linalg, "solve_continuous_lyapunov", lambda A, Q: np.ones_like(A))
    with pytest.raises(IllConditionedError):
        lyapunov_solve(-np.eye(2), np.eye(2))


def test_hankel_values_against_oracle():
    ss = realize(governor_tf(IEEEG1()))
    _, hsv = balanced_truncation(ss, 2)
    Wc = _kron_lyapunov(ss.A, ss.B @ ss.B.T)
    Wo = _kron_lyapunov(ss.A.T, ss.C.T @ ss.C)
    oracle = np.sort(np.sqrt(np.abs(np.linalg.eigvals(Wc @ Wo))))[::-1]
    np.testing.assert_allclose(hsv, oracle, rtol=1e-6)
    assert np.all(np.diff(hsv) <= 0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_truncation_error_bound(r):
    ss = realize(governor_tf(IEEEG1()))
    red, hsv = balanced_truncation(ss, r)
    w = np.logspace(-3, 3, 200)
    err = np.max(np.abs(freq_response(ss, w) - freq_response(red, w)))
    assert err <= 2 * hsv[r:].sum() * (1 + 1e-9)


def test_full_order_truncation_is_exact():
    ss = realize(governor_tf(IEEEG1()))
    red, _ = balanced_truncation(ss, 4)
    w = np.logspace(-2, 2, 50)
    np.testing.assert_allclose(freq_response(red, w), freq_response(ss, w), rtol=1e-8, atol=1e-12)


def test_truncation_errors():
    ss = realize(governor_tf(IEEEG1()))
    with pytest.raises(ValueError):
        balanced_truncation(ss, 5)
    with pytest.raises(InstabilityError):
        balanced_truncation(StateSpace([[1.0]], [1.0], [1.0]), 1)
    # second state is unobservable
    nonmin = StateSpace(np.diag([-1.0, -2.0]), [1.0, 1.0], [1.0, 0.0])
    with pytest.raises(NonMinimalError):
        balanced_truncation(nonmin, 1)


# -- integration --------------------------------------------------------------------


def test_rk4_propagator_matches_generic_step():
    rng = np.random.default_rng(5)
    ss = realize(random_stable_tf(rng, n=3))
    Phi, Gamma = rk4_propagator(ss.A, ss.B, 0.05)
    x0 = rng.normal(size=3)
    out = rk4(lambda t, x: ss.A @ x + ss.B[:, 0] * 0.7, x0, 0.05, 1)
    np.testing.assert_allclose(out[1], Phi @ x0 + Gamma[:, 0] * 0.7, rtol=1e-13, atol=1e-15)


def test_block_propagation_equals_stepwise():
    rng = np.random.default_rng(11)
    ss = realize(random_stable_tf(rng, n=4))
    u = np.concatenate([np.zeros(50), np.full(9000, 0.3), np.full(100, -1.0)])
    X = rk4_lti(ss.A, ss.B, np.zeros(4), u, 0.01, block=256)
    x = np.zeros(4)
    Phi, Gamma = rk4_propagator(ss.A, ss.B, 0.01)
    for k, uk in enumerate(u):
        x = Phi @ x + Gamma[:, 0] * uk
    np.testing.assert_allclose(X[-1], x, rtol=1e-10, atol=1e-13)
    assert X.shape == (len(u) + 1, 4)


def test_rk4_fourth_order_convergence():
    A = np.array([[0.0, 1.0], [-4.0, -0.4]])
    f = lambda t, x: A @ x  # noqa: E731
    exact = linalg.expm(A * 2.0) @ np.array([1.0, 0.0])
    errs = []
    for n in (20, 40, 80):
        errs.append(np.linalg.norm(rk4(f, [1.0, 0.0], 2.0 / n, n)[-1] - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 13) & (ratios < 19))


def test_rk4_lti_matches_exact_discretization():
    rng = np.random.default_rng(2)
    ss = realize(random_stable_tf(rng, n=3))
    dt = 1e-3
    n = 5000
    X = rk4_lti(ss.A, ss.B, np.zeros(3), np.ones(n), dt)
    sysd = signal.cont2discrete((ss.A, ss.B, ss.C, [[ss.D]]), dt, method="zoh")
    Ad, Bd = sysd[0], sysd[1]
    x = np.zeros(3)
    for _ in range(n):
        x = Ad @ x + Bd[:, 0]
    np.testing.assert_allclose(X[-1], x, rtol=1e-9, atol=1e-12)


def test_rk4_divergence():
    with pytest.raises(DivergenceError):
        rk4_lti(np.array([[50.0]]), np.array([1.0]), [1.0], np.zeros(20000), 0.1)
    with pytest.raises(DivergenceError), np.errstate(over="ignore"):
        rk4(lambda t, x: x * x, [1e10], 1.0, 50)


def test_step_response_and_trajectory():
    h = RationalTransfer([1.0], [15.0, 4.38])
    tr = step_response(realize(h), 1.0, dt=1e-3, horizon=10.0)
    assert len(tr) == 10001
    assert tr["y"][-1] == pytest.approx(1 / 15, rel=1e-4)
    assert tr["y_dot"][1] == pytest.approx(1 / 4.38, rel=1e-2)
    assert "y" in tr and "z" not in tr
    assert tr.t[-1] == pytest.approx(10.0)
    with pytest.raises(ValueError):
        Trajectory(0.1, {"a": np.zeros(3), "b": np.zeros(4)})


def test_running_trapezoid_exact_on_lines():
    t = np.linspace(0, 2, 201)
    np.testing.assert_allclose(running_trapezoid(3 * t + 1, 0.01), 1.5 * t**2 + t, atol=1e-12)
