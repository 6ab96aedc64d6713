import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oblique_observer.scalar_ode import (
    OdeBoundInputs,
    certify,
    envelope_ratio,
    integrate_scalar,
    maxpoly,
    mu0_nonlinear,
    mu_bar_linear,
    window_norm,
)


def exact_log(mu_bar, p, h, L0, step, q):
    """Closed-form ``log|w|`` on a piecewise-constant ``h``, sampled ``q`` times per piece.

    With ``a = mu_bar - h`` and ``y = |w|^{-p}`` the equation becomes the
    linear ``y' = p a y - p h`` on each piece.
    """
    out = [L0]
    L = L0
    tau = step / q
    for hv in h:
        a = mu_bar - hv
        for _ in range(q):
            if hv == 0:
                L = L - a * tau
            else:
                arg = -(hv / a) * math.exp(p * L) * (1 - math.exp(-p * a * tau))
                L = L - a * tau - math.log1p(arg) / p
            out.append(L)
    return np.array(out)


def test_maxpoly_closed_form_example():
    # g(tau) = -tau + 2 sqrt(tau): g' = 0 at tau = 1, g(1) = 1
    tau, val = maxpoly(1.0, 2.0, 0.5)
    assert tau == pytest.approx(1.0)
    assert val == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.05, 0.95))
def test_maxpoly_beats_every_sample(e1, e2, s):
    tau, val = maxpoly(e1, e2, s)
    grid = np.linspace(0, 5 * tau, 1000)
    g = -e1 * grid + e2 * grid ** s
    assert g.max() <= val * (1 + 1e-12) + 1e-300
    assert -e1 * tau + e2 * tau ** s == pytest.approx(val, rel=1e-10)


def test_maxpoly_scaling_in_eta2():
    # maximum scales as eta2^{1/(1-s)}
    s = 0.3
    _, v1 = maxpoly(1.5, 1.0, s)
    _, v2 = maxpoly(1.5, 2.0, s)
    assert v2 / v1 == pytest.approx(2 ** (1 / (1 - s)), rel=1e-12)


def test_maxpoly_validation():
    with pytest.raises(ValueError):
        maxpoly(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        maxpoly(1.0, 1.0, 1.0)


def test_mu_bar_linear_without_perturbation():
    inp = OdeBoundInputs(T=1.0, C_h=0.0, r_frak=2.0, mu=1.5, rho=2.0)
    assert mu_bar_linear(inp) == pytest.approx(3.0)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        OdeBoundInputs(T=1.0, C_h=1.0, r_frak=1.0, mu=1.0, rho=2.0)
    with pytest.raises(ValueError):
        OdeBoundInputs(T=1.0, C_h=1.0, r_frak=2.0, mu=1.0, rho=1.0)
    with pytest.raises(ValueError):
        mu0_nonlinear(OdeBoundInputs(T=1.0, C_h=1.0, r_frak=2.0, mu=1.0, rho=2.0, p=0.0))


@settings(max_examples=50, deadline=None)
@given(
    T=st.floats(0.2, 3), C=st.floats(0.01, 3), r=st.floats(1.2, 5), mu=st.floats(0.05, 3),
    rho=st.floats(1.1, 5), p=st.floats(0.2, 3), R=st.floats(0.1, 3),
)
def test_mu0_lower_bounds_and_monotone_in_R(T, C, r, mu, rho, p, R):
    inp = OdeBoundInputs(T=T, C_h=C, r_frak=r, mu=mu, rho=rho, p=p, R=R)
    mu0, mbar = mu0_nonlinear(inp)
    assert mu0 >= mu
    assert mu0 >= math.log(2) / (p * T) * (1 - 1e-12)
    assert mbar >= 4 * mu0
    bigger = OdeBoundInputs(T=T, C_h=C, r_frak=r, mu=mu, rho=rho, p=p, R=2 * R)
    assert mu0_nonlinear(bigger)[0] >= mu0
    assert mu_bar_linear(inp) >= 2 * mu


def test_window_norm_examples():
    # unit pulse of length 0.5: any window of length 1 captures all of it
    h = np.array([1.0, 0.0, 0.0, 0.0])
    assert window_norm(h, 0.5, 1.0, 2.0) == pytest.approx(math.sqrt(0.5))
    h = np.ones(8)
    assert window_norm(h, 0.25, 1.0, 3.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        window_norm(h, 0.3, 1.0, 2.0)


def test_linear_free_decay_is_exact():
    s = integrate_scalar(2.0, 0.0, np.zeros(10), 0.5, 0.01, 1.0, linear=True)
    np.testing.assert_allclose(s.log_abs, math.log(0.5) - 2.0 * s.t, atol=1e-12)
    assert not s.overflow


def test_nonlinear_with_zero_h_is_exact():
    s = integrate_scalar(1.3, 2.0, np.zeros(5), -0.7, 0.02, 1.0, h_step=0.2)
    np.testing.assert_allclose(s.log_abs, math.log(0.7) - 1.3 * s.t, atol=1e-9)
    assert np.all(s.w < 0)


def test_p_zero_reduces_to_linear_with_doubled_h():
    h = np.array([0.3, 1.0, 0.0, 2.0])
    a = integrate_scalar(3.0, 0.0, h, 0.4, 0.05, 1.0, h_step=0.25)
    b = integrate_scalar(3.0, 0.0, 2 * h, 0.4, 0.05, 1.0, h_step=0.25, linear=True)
    np.testing.assert_allclose(a.log_abs, b.log_abs, atol=1e-12)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_nonlinear_matches_closed_form(sign):
    rng = np.random.default_rng(7)
    for _ in range(10):
        mu_bar, p = rng.uniform(1, 20), rng.uniform(0.5, 2)
        h = rng.exponential(1.0, 8)
        step, q = 0.125, 16
        w0 = sign * rng.uniform(0.05, 0.9)
        s = integrate_scalar(mu_bar, p, h, w0, step / q, 1.0, h_step=step)
        ref = exact_log(mu_bar, p, h, math.log(abs(w0)), step, q)
        assert np.max(np.abs(s.log_abs - ref)) < 1e-7
        assert np.all(np.sign(s.w[s.w != 0]) == sign)
        assert s.error_estimate < 1e-6


def test_growth_is_reported_as_overflow():
    # h exceeds mu_bar and |w| > 1: finite-time blow-up
    s = integrate_scalar(0.5, 1.0, np.full(10, 2.0), 2.0, 0.01, 5.0, h_step=0.5)
    assert s.overflow
    assert np.isinf(s.log_abs[-1])


def test_integrate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        integrate_scalar(1.0, 1.0, np.zeros(3), 0.0, 0.1, 0.3)
    with pytest.raises(ValueError):
        integrate_scalar(1.0, 1.0, np.zeros(3), 1.0, 0.1, 0.3, h_step=0.15)


def test_envelope_ratio_examples():
    t = np.linspace(0, 1, 11)
    assert envelope_ratio(t, -2.0 * t, 2.0) == pytest.approx(1.0)
    assert envelope_ratio(t, -2.0 * t, 1.0) == pytest.approx(1.0)
    # a bump of height log 3 above the decay line
    L = -t.copy()
    L[5] += math.log(3)
    assert envelope_ratio(t, L, 1.0) == pytest.approx(3.0)


def test_certify_small_run():
    t0 = time.perf_counter()
    rep = certify(n_tuples=20, seed=3)
    assert rep.ok
    assert rep.linear_violations == rep.nonlinear_violations == 0
    assert rep.worst_linear_margin <= 0
    assert rep.max_integrator_error < 1e-6
    assert time.perf_counter() - t0 < 20
    assert rep.to_dict()["ok"] is True
