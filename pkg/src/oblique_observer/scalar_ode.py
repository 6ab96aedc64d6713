"""Scalar stability bounds for perturbed exponential decay, with a checking integrator.

The two model problems are::

    v'  = -(mu_bar - |h|) v                      (linear)
    w'  = -(mu_bar - |h| (1 + |w|^p)) w          (nonlinear)

where ``h`` has windowed norms ``sup_s |h|_{L^r(s, s+T)} = C_h``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "OdeBoundInputs",
    "ScalarSeries",
    "maxpoly",
    "mu_bar_linear",
    "mu0_nonlinear",
    "integrate_scalar",
    "window_norm",
    "envelope_ratio",
    "CertificationReport",
    "certify",
]


@dataclass(frozen=True)
class OdeBoundInputs:
    T: float
    C_h: float
    r_frak: float
    mu: float
    rho: float
    p: float = 1.0
    R: float = 1.0
    c: float = 2.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.C_h >= 0:
            raise ValueError("C_h must be nonnegative")
        if not self.r_frak > 1:
            raise ValueError("r_frak must exceed 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if not self.c > 1:
            raise ValueError("c must exceed 1")
        if self.p < 0 or self.R <= 0:
            raise ValueError("need p >= 0 and R > 0")


def maxpoly(eta1: float, eta2: float, s_frak: float) -> tuple[float, float]:
    """Maximiser and maximum of ``g(tau) = -eta1 tau + eta2 tau^s`` on ``tau >= 0``."""
    if not (eta1 > 0 and eta2 > 0):
        raise ValueError("eta1 and eta2 must be positive")
    if not 0 < s_frak < 1:
        raise ValueError("s_frak must lie in (0, 1)")
    s = s_frak
    tau = (s * eta2) ** (1 / (1 - s)) * eta1 ** (1 / (s - 1))
    val = (1 - s) * s ** (s / (1 - s)) * eta2 ** (1 / (1 - s)) * eta1 ** (s / (s - 1))
    return float(tau), float(val)


def mu_bar_linear(inp: OdeBoundInputs) -> float:
    """Smallest ``mu_bar`` certified for rate ``mu`` and overshoot ``rho`` in the linear problem."""
    r, C = inp.r_frak, inp.C_h
    first = 2 * (r - 1) / r * (C ** r / (r * math.log(inp.rho))) ** (1 / (r - 1))
    return max(first, 2 * inp.mu) + inp.T ** (-1 / r) * C


def mu0_nonlinear(inp: OdeBoundInputs) -> tuple[float, float]:
    """Certified rate ``mu0`` and threshold ``mu_bar_*`` for the nonlinear problem."""
    if not inp.p > 0:
        raise ValueError("the nonlinear bound needs p > 0")
    r, C, rho, p, R, T = inp.r_frak, inp.C_h, inp.rho, inp.p, inp.R, inp.T
    q = r / (r - 1)
    t1 = inp.mu
    t2 = math.log(2) / (p * T)
    t3 = (rho ** (2 * p + 1) * R ** p * C / (rho ** 0.5 - 1)) ** q * ((r - 1) / r) * 2 ** (1 / (r - 1))
    t4 = 2 ** ((r + 1) / (r - 1)) * (rho ** (2 * p + 0.5) * C * (p + 1) / p * R ** p * inp.c) ** q \
        * p ** (1 / (r - 1))
    mu0 = max(t1, t2, t3, t4)
    first = 2 * (r - 1) / r * (2 * C ** r / (r * math.log(rho))) ** (1 / (r - 1))
    mu_bar = max(first, 4 * mu0) + T ** (-1 / r) * C
    return float(mu0), float(mu_bar)


# -- integration ---------------------------------------------------------------

@dataclass
class ScalarSeries:
    t: np.ndarray
    w: np.ndarray  # may underflow to 0; use log_abs for envelopes
    log_abs: np.ndarray
    overflow: bool
    error_estimate: float  # step-doubling estimate of the error in log|w|, relative once |log w| > 1


def _rk4_log(mu_bar, p, h, L0, dt, q, linear, resolve=0.02):
    """RK4 for ``L = log|w|``; ``h`` holds piece values, ``q`` output steps per piece.

    The linear problem has a constant right-hand side on each piece, so one
    RK4 step is exact.  In the nonlinear problem the term ``h e^{pL}`` varies
    on the time scale ``1 / (p |L'|)``; while it is not negligible each
    output step is split into substeps of at most ``resolve`` times that
    scale.  Returns ``L`` at the output grid.
    """
    n_pieces = h.shape[0]
    L = float(L0)
    out = np.empty(n_pieces * q + 1)
    out[0] = L

    def f(Lv, hv):
        if linear:
            return -mu_bar + hv
        return -mu_bar + hv * (1.0 + math.exp(min(p * Lv, 700.0)))

    def rk4(Lv, hv, tau):
        k1 = f(Lv, hv)
        k2 = f(Lv + 0.5 * tau * k1, hv)
        k3 = f(Lv + 0.5 * tau * k2, hv)
        k4 = f(Lv + tau * k3, hv)
        return Lv + tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    k = 0
    for i in range(n_pieces):
        hv = float(h[i])
        for _ in range(q):
            if linear or hv == 0.0 or p == 0.0:
                L = rk4(L, hv, dt)
            else:
                done = 0.0
                while done < dt:
                    g = hv * math.exp(min(p * L, 700.0))
                    tau = dt - done
                    if g * tau > 1e-17:
                        rate = p * (abs(f(L, hv)) + g)
                        tau = min(tau, resolve / rate)
                    L = rk4(L, hv, tau)
                    done += tau
                    if L > 700.0 or not math.isfinite(L):
                        break
            k += 1
            out[k] = L
            if L > 700.0 or not math.isfinite(L):
                out[k:] = math.inf
                return out
    return out


def integrate_scalar(mu_bar, p, h_samples, w0, dt: float, T_end: float, h_step: float | None = None,
                     linear: bool = False) -> ScalarSeries:
    """RK4 trajectory of the scalar problem with piecewise-constant ``h``.

    ``h_samples[i]`` is the value of ``|h|`` on ``[i h_step, (i+1) h_step)``
    (``h_step`` defaults to ``dt``; it must be a multiple of ``dt``).  With
    ``linear`` the rate is ``mu_bar - |h|``; otherwise ``mu_bar - |h|(1 + |w|^p)``.
    The sign of ``w`` is preserved by construction.
    """
    h_step = dt if h_step is None else h_step
    q = int(round(h_step / dt))
    if q < 1 or abs(q * dt - h_step) > 1e-9 * h_step:
        raise ValueError("h_step must be a positive multiple of dt")
    n_pieces = int(round(T_end / h_step))
    h = np.abs(np.asarray(h_samples, dtype=float))
    if h.shape[0] < n_pieces:
        h = np.concatenate([h, np.zeros((n_pieces - h.shape[0],) + h.shape[1:])])
    h = h[:n_pieces]
    w0 = np.asarray(w0, dtype=float)
    if np.any(w0 == 0):
        raise ValueError("w0 must be nonzero (zero is an equilibrium)")
    if w0.ndim:
        raise ValueError("w0 must be a scalar")
    L0 = math.log(abs(float(w0)))
    coarse = _rk4_log(mu_bar, p, h, L0, dt, q, linear)
    # step doubling: halve every output step and every substep
    fine = _rk4_log(mu_bar, p, h, L0, dt / 2, 2 * q, linear, resolve=0.01)[::2]
    overflow = bool(np.any(~np.isfinite(coarse)) or np.any(coarse > 700))
    finite = np.isfinite(coarse) & np.isfinite(fine)
    # relative once |L| > 1: at large |L| the rounding of L itself dominates
    scale = np.maximum(1.0, np.abs(coarse[finite]))
    err = float(np.max(np.abs(fine[finite] - coarse[finite]) / scale)) / 15.0 if finite.any() else math.inf
    t = np.arange(coarse.shape[0]) * dt
    with np.errstate(over="ignore"):
        w = math.copysign(1.0, float(w0)) * np.exp(coarse)
    return ScalarSeries(t, w, coarse, overflow, err)


def window_norm(h_samples, h_step: float, T: float, r_frak: float) -> float:
    """Exact ``sup_s |h|_{L^r(s, s+T)}`` for piecewise-constant ``h`` (zero after the samples).

    ``T`` must be a multiple of ``h_step``; the window integral is then
    piecewise linear in ``s`` with extrema at piece boundaries.
    """
    m = int(round(T / h_step))
    if m < 1 or abs(m * h_step - T) > 1e-9 * T:
        raise ValueError("T must be a positive multiple of h_step")
    a = np.abs(np.asarray(h_samples, dtype=float)) ** r_frak
    a = np.concatenate([np.zeros(1), a, np.zeros(m)])
    c = np.cumsum(a)
    sums = c[m:] - c[:-m]
    return float((h_step * sums.max()) ** (1 / r_frak))


def envelope_ratio(t, log_abs, mu: float) -> float:
    """``max_{t >= s} |w(t)| e^{mu (t - s)} / |w(s)|`` from a log-magnitude series."""
    g = np.asarray(log_abs) + mu * np.asarray(t)
    return float(np.exp(np.max(g - np.minimum.accumulate(g))))


# -- certification -----------------------------------------------------------------

@dataclass
class CertificationReport:
    n_tuples: int
    linear_violations: int
    nonlinear_violations: int
    worst_linear_margin: float  # max of envelope / rho - 1 (<= 0 means satisfied)
    worst_nonlinear_margin: float
    max_integrator_error: float
    maxpoly_max_rel_error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(self.linear_violations == 0 and self.nonlinear_violations == 0
                    and self.maxpoly_max_rel_error < 1e-6)

    def to_dict(self) -> dict:
        return {**asdict(self), "ok": self.ok}


def _draw_inputs(rng) -> OdeBoundInputs:
    return OdeBoundInputs(
        T=float(rng.uniform(0.5, 2.0)),
        C_h=float(rng.uniform(0.1, 2.0)),
        r_frak=float(rng.uniform(1.5, 4.0)),
        mu=float(rng.uniform(0.1, 2.0)),
        rho=float(rng.uniform(1.2, 4.0)),
        p=float(rng.uniform(0.5, 2.0)),
        R=float(rng.uniform(0.2, 1.5)),
        c=float(rng.uniform(1.1, 2.0)),
    )


def _random_h(rng, inp: OdeBoundInputs, pieces_per_window: int, windows: int):
    # nonnegative pieces, some windows concentrated near one piece, rescaled to C_h exactly
    n = pieces_per_window * windows
    h = rng.exponential(1.0, n) * (rng.random(n) < 0.6)
    if rng.random() < 0.5:
        h[rng.integers(n)] += rng.uniform(2, 10)
    if not np.any(h > 0):
        h[0] = 1.0
    step = inp.T / pieces_per_window
    h *= inp.C_h / window_norm(h, step, inp.T, inp.r_frak)
    return h, step


def _maxpoly_grid_check(rng, n_cases: int = 5, n_grid: int = 10 ** 6) -> float:
    worst = 0.0
    for _ in range(n_cases):
        e1, e2, s = rng.uniform(0.2, 5), rng.uniform(0.2, 5), rng.uniform(0.1, 0.9)
        tau, val = maxpoly(e1, e2, s)
        grid = np.linspace(0.0, 3.0 * tau, n_grid)
        g = -e1 * grid + e2 * grid ** s
        worst = max(worst, abs(g.max() - val) / abs(val))
    return worst


def certify(n_tuples: int = 200, seed: int = 0, tolerance: float = 1e-7,
            pieces_per_window: int = 8, windows: int = 4, steps_per_piece: int = 16) -> CertificationReport:
    """Integrate both model problems at the computed thresholds and count envelope violations.

    Each tuple draws inputs, a nonnegative piecewise-constant ``h`` with
    window norm exactly ``C_h``, and ``w0`` with ``|w0| < R``.  The linear
    problem uses ``mu_bar_linear`` and must stay below ``rho e^{-mu(t-s)}``;
    the nonlinear one uses ``mu_bar_*`` and must stay below
    ``rho e^{-mu0 (t-s)}``.  ``h`` vanishes after ``windows`` windows and the
    run continues one more window.
    """
    rng = np.random.default_rng(seed)
    lin_v = nl_v = 0
    worst_lin = worst_nl = -math.inf
    max_err = 0.0
    for _ in range(n_tuples):
        inp = _draw_inputs(rng)
        h, step = _random_h(rng, inp, pieces_per_window, windows)
        T_end = inp.T * (windows + 1)
        dt = step / steps_per_piece
        sign = 1.0 if rng.random() < 0.5 else -1.0
        w0 = sign * inp.R * rng.uniform(0.05, 0.999)

        mb = mu_bar_linear(inp)
        lin = integrate_scalar(mb, 0.0, h, w0, dt, T_end, h_step=step, linear=True)
        ratio = envelope_ratio(lin.t, lin.log_abs, inp.mu)
        margin = ratio / inp.rho - 1.0
        worst_lin = max(worst_lin, margin)
        lin_v += int(margin > tolerance or lin.overflow)

        mu0, mbs = mu0_nonlinear(inp)
        nl = integrate_scalar(mbs, inp.p, h, w0, dt, T_end, h_step=step)
        ratio = envelope_ratio(nl.t, nl.log_abs, mu0)
        margin = ratio / inp.rho - 1.0
        worst_nl = max(worst_nl, margin)
        nl_v += int(margin > tolerance or nl.overflow)
        max_err = max(max_err, lin.error_estimate, nl.error_estimate)
    return CertificationReport(
        n_tuples=n_tuples,
        linear_violations=lin_v,
        nonlinear_violations=nl_v,
        worst_linear_margin=float(worst_lin),
        worst_nonlinear_margin=float(worst_nl),
        max_integrator_error=float(max_err),
        maxpoly_max_rel_error=float(_maxpoly_grid_check(rng)),
        tolerance=tolerance,
    )
