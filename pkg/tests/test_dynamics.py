import csv
import io
import json
import math

import numpy as np
import pytest

from oblique_observer.auxspaces import ObliqueProjector, build_aux_family
from oblique_observer.dynamics import (
    Coefficients, RunSummary, SimState, Stepper, assemble_reaction_convection, detect_blowup, fit_decay,
    manufactured_forcing, nonlinear_rhs, nonlinear_rhs_jacobian, persistent_boundedness, simulate_error,
    simulate_plant_observer, step,
)
from oblique_observer.fem import RectDomain, assemble, build_grid
from oblique_observer.injection import build_injection
from oblique_observer.sensing import assemble_output, sensor_layout

SQ = RectDomain((1.0, 1.0))
REFERENCE = dict(a="-2 + x1 - abs(sin(t + x1))", b=["x1 + x2", "cos(t)*x1*x2"], a_tilde=-1, b_tilde=[1, -2],
            r_exp=4, s_exp=1)


@pytest.fixture(scope="module")
def ref_coeffs():
    return Coefficients.make(2, **REFERENCE)


@pytest.fixture(scope="module")
def injection16(space17):
    lay = sensor_layout(2, 0.25, SQ)
    op = assemble_output(lay, space17)
    P = ObliqueProjector(op, build_aux_family("sin2", space17, lay, op))
    return op, P


def test_coefficients_validation():
    with pytest.raises(ValueError):
        Coefficients.make(2, b=["x1"])
    with pytest.raises(ValueError):
        Coefficients.make(2, r_exp=1.0)
    with pytest.raises(ValueError):
        Coefficients.make(2, s_exp=0.5)
    with pytest.raises(ValueError):
        Coefficients.make(1, a="x2")


def test_check_bounded(space17, ref_coeffs):
    assert ref_coeffs.check_bounded(space17, [0.0, 1.0, 2.5]) <= 3.0 + 1e-12


def test_reaction_constant_is_scaled_mass(space17):
    c = Coefficients.make(2, a=2.5)
    A = assemble_reaction_convection(c, space17, 0.0)
    assert abs(A - 2.5 * space17.mass).max() < 1e-14


def test_convection_exact_for_linears(space17):
    c = Coefficients.make(2, b=[2.0, -1.0])
    A = assemble_reaction_convection(c, space17, 0.0)
    u = space17.interpolate(lambda x: 3 * x[:, 0] + x[:, 1])  # b . grad u = 5
    np.testing.assert_allclose(A @ u, space17.mass @ np.full(space17.n_dofs, 5.0), atol=1e-13)


def test_reference_coefficients_assemble(space17, ref_coeffs):
    A = assemble_reaction_convection(ref_coeffs, space17, 0.0)
    assert np.all(np.isfinite(A.data))


def test_nonlinear_zero_and_constant():
    sp1 = assemble(build_grid(RectDomain((1.0,)), 9), 0.1)
    c = Coefficients.make(1, a_tilde=1, r_exp=3)
    np.testing.assert_array_equal(nonlinear_rhs(c, sp1, np.zeros(9)), 0)
    load = nonlinear_rhs(c, sp1, np.full(9, 0.7))
    np.testing.assert_allclose(load, 0.7 ** 3 * sp1.mass @ np.ones(9), rtol=1e-12)


def test_nonlinear_jacobian_fd(space17, ref_coeffs, rng):
    u = space17.interpolate(lambda x: 1 + np.sin(3 * x[:, 0]) * x[:, 1])
    v = rng.standard_normal(space17.n_dofs)
    eps = 1e-5
    plus = nonlinear_rhs(ref_coeffs, space17, u + eps * v, 0.3)
    minus = nonlinear_rhs(ref_coeffs, space17, u - eps * v, 0.3)
    fd = (plus - minus) / (2 * eps)
    jv = nonlinear_rhs_jacobian(ref_coeffs, space17, u, v, 0.3)
    assert np.linalg.norm(fd - jv) <= 1e-5 * np.linalg.norm(jv)


def test_pure_diffusion_energy_decays(space17, rng):
    st = Stepper(space17, Coefficients.make(2), 1e-2)
    s = SimState(0.0, rng.standard_normal(space17.n_dofs))
    prev = space17.norm_h(s.current)
    for _ in range(20):
        s = st.step(s)
        cur = space17.norm_h(s.current)
        assert cur <= prev * (1 + 1e-13)
        prev = cur


def test_constants_are_steady_states(space17):
    c = Coefficients.make(2, a=-1.0)  # -nu Lap + 1 + a annihilates constants
    st = Stepper(space17, c, 1e-2)
    s = SimState(0.0, np.full(space17.n_dofs, 2.0))
    for _ in range(5):
        s = st.step(s)
    np.testing.assert_allclose(s.current, 2.0, rtol=1e-11)


def test_step_wrapper_matches_stepper(space17, ref_coeffs):
    u0 = space17.interpolate(lambda x: 0.1 * (2 - x[:, 0] * x[:, 1]))
    a = step(SimState(0.0, u0), space17, ref_coeffs, None, 1e-3).current
    b = Stepper(space17, ref_coeffs, 1e-3).step(SimState(0.0, u0)).current
    np.testing.assert_array_equal(a, b)


def test_manufactured_second_order(space17, ref_coeffs):
    phi = space17.interpolate(lambda x: np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))
    us = lambda t: math.exp(-t) * phi  # noqa: E731
    F = manufactured_forcing(space17, ref_coeffs, us, lambda t: -us(t))
    errs = []
    for dt in (8e-3, 4e-3, 2e-3):
        st = Stepper(space17, ref_coeffs, dt, forcing=F)
        s = SimState(0.0, us(0.0))
        for _ in range(int(round(0.4 / dt))):
            s = st.step(s)
        errs.append(space17.norm_v(s.current - us(s.t)))
    for e0, e1 in zip(errs, errs[1:]):
        assert 3.5 <= e0 / e1 <= 4.5


def test_injection_alone_dissipates_v_norm(space17, injection16, rng):
    op, P = injection16
    # the injection is explicit (AB2), so dt must resolve lam times its largest rate
    inj = build_injection(5.0, 2, op, P, space17)
    r = simulate_error(space17, Coefficients.make(2), rng.standard_normal(space17.n_dofs), 0.05, 1e-4,
                       inj, stride=1)
    assert np.all(np.diff(r.norm_v) <= 1e-12 * r.norm_v[:-1])


def test_simulate_error_free_blowup(space17, ref_coeffs):
    z0 = space17.interpolate(lambda x: 2 - x[:, 0] * x[:, 1])
    r = simulate_error(space17, ref_coeffs, z0, 0.4, 1e-4, stride=50)
    assert r.blowup and 0.05 < r.t_blowup < 0.3
    assert r.mu_hat is None and r.rho_hat is None
    assert r.norm_v[0] == pytest.approx(1.0)


def test_determinism(space17, ref_coeffs, injection16):
    op, P = injection16
    inj = build_injection(0.02, 2, op, P, space17)
    z0 = space17.interpolate(lambda x: 2 - x[:, 0] * x[:, 1])
    r1 = simulate_error(space17, ref_coeffs, z0, 0.05, 1e-3, inj, stride=5)
    r2 = simulate_error(space17, ref_coeffs, z0, 0.05, 1e-3, inj, stride=5)
    assert r1.to_csv() == r2.to_csv()


def test_coupled_exact_start(space17, ref_coeffs, injection16):
    op, P = injection16
    inj = build_injection(0.1, 2, op, P, space17)
    y0 = space17.interpolate(lambda x: 0.05 * np.cos(np.pi * x[:, 0]))
    plant, err = simulate_plant_observer(space17, ref_coeffs, y0, y0.copy(), 0.05, 1e-3, inj, op, stride=5)
    assert np.max(err.norm_v) < 1e-8


def test_coupled_linear_matches_error_system(space17, injection16):
    op, P = injection16
    lin = Coefficients.make(2, a="-2 + x1 - abs(sin(t + x1))", b=["x1 + x2", "cos(t)*x1*x2"], f="sin(t)*x1")
    inj = build_injection(0.3, 2, op, P, space17)
    y0 = space17.interpolate(lambda x: np.cos(np.pi * x[:, 0]) * x[:, 1])
    yhat0 = space17.interpolate(lambda x: 1 + x[:, 0] ** 2)
    T, dt = 0.1, 1e-3
    _, err = simulate_plant_observer(space17, lin, y0, yhat0, T, dt, inj, op, stride=10)
    lin0 = Coefficients.make(2, a="-2 + x1 - abs(sin(t + x1))", b=["x1 + x2", "cos(t)*x1*x2"])
    ref = simulate_error(space17, lin0, yhat0 - y0, T, dt, inj, stride=10, normalize=False)
    np.testing.assert_allclose(err.norm_v, ref.norm_v, rtol=1e-8)


def test_coupled_stabilized_nonlinear(space17, ref_coeffs, injection16):
    op, P = injection16
    inj = build_injection(1.0, 2, op, P, space17)
    y0 = space17.interpolate(lambda x: 0.01 * (1 + x[:, 0]))
    yhat0 = y0 + space17.interpolate(lambda x: 0.05 * np.cos(np.pi * x[:, 1]))
    plant, err = simulate_plant_observer(space17, ref_coeffs, y0, yhat0, 1.0, 2e-4, inj, op, stride=50,
                                         keep_states=True)
    assert not err.blowup and not plant.blowup
    assert err.norm_v[-1] < 1e-3 * err.norm_v[0]
    rep = persistent_boundedness(space17, plant.times, plant.meta["states"], window=1.0)
    assert rep["sup_norm_V"] < 1.0 and rep["max_window_L2_DA"] > 0


def test_fit_decay_examples():
    t = np.linspace(0, 5, 501)
    mu, rho = fit_decay(t, np.exp(-3 * t), 0.0)
    assert mu == pytest.approx(3, abs=1e-9)
    assert rho == pytest.approx(1, abs=1e-6)
    mu2, _ = fit_decay(t, 7.5 * np.exp(-3 * t), 0.0)
    assert mu2 == pytest.approx(3, abs=1e-9)
    y = 2 * np.exp(-3 * t) * (1 + 0.5 * np.sin(t))
    mu3, rho3 = fit_decay(t, y, 0.0)
    # direct pairwise oracle on the same series
    g = np.log(y) + mu3 * t
    oracle = np.exp(max(g[j] - g[i] for i in range(0, 501, 5) for j in range(i, 501, 5)))
    assert rho3 >= 1 and rho3 == pytest.approx(oracle, rel=0.05)
    with pytest.raises(ValueError):
        fit_decay(t[:5], np.exp(-t[:5]), 0.0)


def test_detect_blowup():
    assert not detect_blowup(np.ones(3), 1.0, 1.0)
    assert detect_blowup(np.array([np.nan, 1.0]), 1.0, 1.0)
    assert detect_blowup(np.ones(3), 1e7, 1.0)


def test_csv_format():
    s = RunSummary(False, None, 1.0, 1.0, np.array([0.0, 0.1]), np.array([1.0, 1 / 3]),
                   np.array([0.5, 0.25]), np.array([0.0, 2.0]), {"S_sigma": 4})
    text = s.to_csv()
    assert text.startswith("t,norm_V,norm_H,inj_norm_H\n")
    assert "\r" not in text and text.endswith("\n")
    rows = list(csv.reader(io.StringIO(text)))
    assert float(rows[2][1]) == 1 / 3  # 17 significant digits round-trip
    d = json.loads(s.to_json())
    assert list(d) == ["blowup", "t_blowup", "mu_hat", "rho_hat", "inj_norm_t0", "S_sigma", "lambda",
                       "ell", "nodes_per_dim", "dt"]
