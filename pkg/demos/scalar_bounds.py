"""Certified rates for the scalar comparison problems, and a trajectory check.

Computes ``mu_bar`` for the linear problem and ``(mu0, mu_bar_*)`` for the
nonlinear one, integrates both against a spiky ``h`` and prints the
observed envelope constants.
"""
import numpy as np

from oblique_observer.scalar_ode import (
    OdeBoundInputs, envelope_ratio, integrate_scalar, mu0_nonlinear, mu_bar_linear, window_norm,
)


def main():
    inp = OdeBoundInputs(T=1.0, C_h=1.0, r_frak=3.0, mu=0.5, rho=2.0, p=1.0, R=1.0)
    rng = np.random.default_rng(0)
    step = inp.T / 8
    h = rng.exponential(1.0, 32)
    h[5] += 6.0
    h *= inp.C_h / window_norm(h, step, inp.T, inp.r_frak)

    mb = mu_bar_linear(inp)
    mu0, mbs = mu0_nonlinear(inp)
    lin = integrate_scalar(mb, 0.0, h, 0.9, step / 16, 5.0, h_step=step, linear=True)
    nl = integrate_scalar(mbs, inp.p, h, 0.9, step / 16, 5.0, h_step=step)
    ratio = envelope_ratio(lin.t, lin.log_abs, inp.mu)
    print(f"linear:    mu_bar={mb:.4g}, envelope ratio {ratio:.4f} <= rho={inp.rho}")
    print(f"nonlinear: mu0={mu0:.4g}, mu_bar*={mbs:.4g}, "
          f"envelope ratio {envelope_ratio(nl.t, nl.log_abs, mu0):.4f} <= rho={inp.rho}")


if __name__ == "__main__":
    main()
