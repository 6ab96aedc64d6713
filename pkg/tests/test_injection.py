import json

import numpy as np
import pytest

from oblique_observer.auxspaces import ObliqueProjector, build_aux_family, gram_matrix
from oblique_observer.fem import RectDomain
from oblique_observer.injection import (
    InjectionOperator, apply, build_injection, injected_energy_check, operator_norm_report,
)
from oblique_observer.sensing import assemble_output, sensor_layout

SQ = RectDomain((1.0, 1.0))


@pytest.fixture(scope="module")
def parts(space17):
    lay = sensor_layout(1, 0.25, SQ)
    op = assemble_output(lay, space17)
    aux = build_aux_family("sin2", space17, lay, op)
    return space17, op, ObliqueProjector(op, aux)


def _reference(space, proj, lam, ell, z):
    # factor by factor: -lam A^{-1} P_W A^ell P_aux z
    q = proj.onto_aux(z)
    for _ in range(int(ell)):
        q = space.apply_A(q)
    return -lam * space.inverse_A(proj.onto_sensors(q))


def test_zero_gain_is_zero(parts):
    space, op, P = parts
    inj = build_injection(0.0, 2, op, P, space)
    assert np.all(apply(inj, np.ones(4)) == 0)


def test_zero_residual(parts):
    space, op, P = parts
    inj = build_injection(0.5, 2, op, P, space)
    np.testing.assert_array_equal(inj.apply(np.zeros(4)), 0)


@pytest.mark.parametrize("ell", [0, 1, 2])
def test_matches_factorwise_composition(parts, ell, rng):
    space, op, P = parts
    inj = build_injection(0.3, ell, op, P, space)
    for _ in range(5):
        z = rng.standard_normal(space.n_dofs)
        got = inj.apply(op.indicator_loads @ z)
        ref = _reference(space, P, 0.3, ell, z)
        assert space.norm_h(got - ref) <= 1e-9 * space.norm_h(ref)


def test_linearity_and_scaling(parts, rng):
    space, op, P = parts
    inj = build_injection(0.2, 2, op, P, space)
    a, b = rng.standard_normal((2, 4))
    np.testing.assert_allclose(inj.apply(2 * a - b), 2 * inj.apply(a) - inj.apply(b), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(inj.scaled(0.4).apply(a), 2 * inj.apply(a), rtol=1e-12)
    np.testing.assert_allclose(inj.apply_load(a), space.mass @ inj.apply(a), rtol=1e-12)


def test_range_in_inverse_image_of_sensors(parts, rng):
    space, op, P = parts
    inj = build_injection(1.0, 2, op, P, space)
    out = inj.apply(rng.standard_normal(4))
    Aout = space.apply_A(out)
    Wf = op.indicator_fields
    c = np.linalg.lstsq(Wf, Aout, rcond=None)[0]
    assert space.norm_h(Wf @ c - Aout) <= 1e-8 * space.norm_h(Aout)


@pytest.mark.parametrize("ell", [0, 1, 2])
def test_dissipativity_witness(parts, ell, rng):
    space, op, P = parts
    lam = 0.7
    inj = build_injection(lam, ell, op, P, space)
    G = gram_matrix(P.aux, space, ell)
    for _ in range(10):
        z = rng.standard_normal(space.n_dofs)
        lhs = 2 * space.inner_h(inj.apply(op.indicator_loads @ z), space.apply_A(z))
        c = P.aux_coefficients(z)
        rhs = -2 * lam * (c @ G @ c)
        assert lhs <= 0
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_validation(parts):
    space, op, P = parts
    with pytest.raises(ValueError):
        InjectionOperator(-1.0, 2, op, P, space)
    with pytest.raises(ValueError):
        InjectionOperator(1.0, 2.5, op, P, space)
    other = assemble_output(sensor_layout(1, 0.25, SQ), space)
    with pytest.raises(ValueError):
        InjectionOperator(1.0, 2, other, P, space)


def test_norm_report_bounds(parts):
    space, op, P = parts
    r1 = operator_norm_report(build_injection(0.5, 2, op, P, space))
    r2 = operator_norm_report(build_injection(1.0, 2, op, P, space))
    assert r1.within_bound and r2.within_bound
    assert r1.norm <= r1.bound * (1 + 1e-9)
    assert r2.norm == pytest.approx(2 * r1.norm, rel=1e-10)
    assert r1.c_tilde <= r1.c_tilde_factor_bound * (1 + 1e-9)
    d = json.loads(r1.to_json())
    assert {"norm", "bound", "c_tilde", "norm_lift", "c_tilde_factors", "within_bound"} <= set(d)


def test_injected_energy_check_on_exponential():
    t = np.linspace(0, 5, 2001)
    g = np.exp(-2 * t)
    rep = injected_energy_check(t, g, lam=1.0, rho=1.01, mu=2.0, c_tilde=1.0, z0_norm_h=1.0)
    assert rep["energy"] == pytest.approx(0.5, rel=1e-4)
    assert rep["ok"]
