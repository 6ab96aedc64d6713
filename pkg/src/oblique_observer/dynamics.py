"""Crank-Nicolson / Adams-Bashforth time stepping for plant, observer and error.

The implicit part is ``calA(t) = -nu Lap + 1 + a(., t)``; everything else
(convection ``b . grad``, the nonlinearity, the injection and the forcing)
is collected in the explicit load ``R`` and extrapolated with AB2::

    (M/dt + calA_{j+1}/2) u_{j+1} = (M/dt - calA_j/2) u_j + (3 R_j - R_{j-1})/2

The first step uses ``R_{-1} = R_0``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .expressions import Expression, constant, parse_expression
from .fem import FemSpace
from .injection import InjectionOperator
from .sensing import OutputOperator

__all__ = [
    "Coefficients",
    "SimState",
    "RunSummary",
    "Stepper",
    "assemble_reaction_convection",
    "nonlinear_rhs",
    "nonlinear_rhs_jacobian",
    "step",
    "manufactured_forcing",
    "simulate_error",
    "simulate_plant_observer",
    "fit_decay",
    "detect_blowup",
    "persistent_boundedness",
    "BLOWUP_FACTOR",
]

BLOWUP_FACTOR = 1e6


def _expr(e) -> Expression:
    if isinstance(e, Expression):
        return e
    if isinstance(e, (int, float)):
        return constant(e)
    return parse_expression(e)


def _is_zero(e: Expression) -> bool:
    return e.tree == ("num", 0.0)


@dataclass(frozen=True)
class Coefficients:
    """Coefficients of ``z' + A z + a z + b.grad z + N(z) = f``.

    ``N(z) = a_tilde |z|^{r-1} z + (b_tilde . grad z) |z|^{s-1} z``.  Use
    :meth:`make` to build one from expression strings or numbers.
    """

    a: Expression
    b: tuple[Expression, ...]
    a_tilde: Expression
    b_tilde: tuple[Expression, ...]
    f: Expression
    r_exp: float = 3.0
    s_exp: float = 1.0

    @classmethod
    def make(cls, dim: int, a=0.0, b=None, a_tilde=0.0, b_tilde=None, f=0.0,
             r_exp: float = 3.0, s_exp: float = 1.0) -> "Coefficients":
        b = [0.0] * dim if b is None else list(b)
        b_tilde = [0.0] * dim if b_tilde is None else list(b_tilde)
        if len(b) != dim or len(b_tilde) != dim:
            raise ValueError(f"b and b_tilde need {dim} components")
        if not r_exp > 1:
            raise ValueError(f"r_exp must exceed 1, got {r_exp}")
        if not s_exp >= 1:
            raise ValueError(f"s_exp must be at least 1, got {s_exp}")
        out = cls(_expr(a), tuple(_expr(e) for e in b), _expr(a_tilde),
                  tuple(_expr(e) for e in b_tilde), _expr(f), float(r_exp), float(s_exp))
        for e in out.all_expressions():
            if e.max_dim > dim:
                raise ValueError(f"expression {e.source!r} uses x{e.max_dim} in dimension {dim}")
        return out

    def all_expressions(self):
        return (self.a, *self.b, self.a_tilde, *self.b_tilde, self.f)

    @property
    def has_nonlinearity(self) -> bool:
        return not all(_is_zero(e) for e in (self.a_tilde, *self.b_tilde))

    @property
    def has_convection(self) -> bool:
        return not all(_is_zero(e) for e in self.b)

    @property
    def has_gradient_nonlinearity(self) -> bool:
        return not all(_is_zero(e) for e in self.b_tilde)

    def check_bounded(self, space: FemSpace, times: Sequence[float]) -> float:
        """Largest absolute coefficient value sampled at the quadrature points."""
        X = space.quad_points
        worst = 0.0
        for t in times:
            for e in self.all_expressions():
                v = e(X, t)
                if not np.all(np.isfinite(v)):
                    raise ValueError(f"expression {e.source!r} is not finite at t={t}")
                worst = max(worst, float(np.max(np.abs(v))))
        return worst


class _Sampler:
    """Expression values at the quadrature points, cached when time-independent."""

    def __init__(self, X: np.ndarray):
        self.X = X
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, e: Expression, t: float) -> np.ndarray:
        if e.depends_on_t:
            return e(self.X, t)
        v = self._cache.get(id(e))
        if v is None:
            v = self._cache[id(e)] = e(self.X, 0.0)
        return v


def assemble_reaction_convection(coeffs: Coefficients, space: FemSpace, t: float) -> sp.csr_matrix:
    """Galerkin matrix of ``u -> a(., t) u + b(., t) . grad u`` by element quadrature."""
    X = space.quad_points
    out = space.weighted_mass(coeffs.a(X, t))
    w = space.quad_weights
    E = space.evaluate
    for j, bj in enumerate(coeffs.b):
        vals = bj(X, t)
        if np.any(vals != 0):
            Gq = space.gradient[j][space.quad_element]
            out = out + E.T @ sp.diags(w * vals) @ Gq
    return out.tocsr()


def _nonlinear_values(coeffs: Coefficients, u_q, grad_q, at, bt):
    au = np.abs(u_q)
    out = at * au ** (coeffs.r_exp - 1.0) * u_q
    if bt is not None:
        bgrad = np.einsum("qd,qd->q", bt, grad_q)
        out = out + bgrad * au ** (coeffs.s_exp - 1.0) * u_q
    return out


def nonlinear_rhs(coeffs: Coefficients, space: FemSpace, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Load vector of ``N(t, u)`` evaluated at the element quadrature points."""
    X = space.quad_points
    at = coeffs.a_tilde(X, t)
    bt = np.column_stack([e(X, t) for e in coeffs.b_tilde])
    return space.load(_nonlinear_values(coeffs, space.values_at_quad(u),
                                        space.gradients_at_quad(u), at, bt))


def nonlinear_rhs_jacobian(coeffs: Coefficients, space: FemSpace, u: np.ndarray, v: np.ndarray,
                           t: float = 0.0) -> np.ndarray:
    """Directional derivative of :func:`nonlinear_rhs` at ``u`` along ``v``."""
    X = space.quad_points
    at = coeffs.a_tilde(X, t)
    bt = np.column_stack([e(X, t) for e in coeffs.b_tilde])
    uq, vq = space.values_at_quad(u), space.values_at_quad(v)
    gu, gv = space.gradients_at_quad(u), space.gradients_at_quad(v)
    r, s = coeffs.r_exp, coeffs.s_exp
    au = np.abs(uq)
    # d/du (|u|^{p-1} u) = p |u|^{p-1}
    d = at * r * au ** (r - 1) * vq
    d = d + np.sum(bt * gv, axis=1) * au ** (s - 1) * uq + np.sum(bt * gu, axis=1) * s * au ** (s - 1) * vq
    return space.load(d)


@dataclass
class SimState:
    t: float
    current: np.ndarray
    previous_load: np.ndarray | None = None  # R at the previous step, for AB2
    step_index: int = 0


class Stepper:
    """Stateful CN/AB2 integrator for one field.

    ``injection(u, t)`` and ``forcing(t)`` return extra load vectors added to
    the explicit part; the observer passes a closure over the received
    measurements as its injection.
    """

    def __init__(self, space: FemSpace, coeffs: Coefficients, dt: float,
                 injection: Callable[[np.ndarray, float], np.ndarray] | None = None,
                 forcing: Callable[[float], np.ndarray] | None = None,
                 solver_tol: float = 1e-13):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.space = space
        self.coeffs = coeffs
        self.dt = float(dt)
        self.injection = injection
        self.forcing = forcing
        self.solver_tol = solver_tol
        self.sample = _Sampler(space.quad_points)
        M = space.mass.tocsr()
        M.sort_indices()
        self._M = M
        self._pattern_perm = _transpose_permutation(M)
        self._aw_data = _data_in_pattern(space.a_full, M)
        self._base_data = M.data / self.dt
        self._a_nonzero = not _is_zero(coeffs.a)
        self._need_grad = coeffs.has_convection or coeffs.has_gradient_nonlinearity
        self._lhs_cache: tuple[float, np.ndarray] | None = None
        # |a| is bounded, so M/dt + calA(0)/2 stays spectrally close to every later matrix
        self._precond = spla.splu(self._matrix(self._base_data + 0.5 * self._calA_data(0.0)).tocsc()).solve

    def _calA_data(self, t: float) -> np.ndarray:
        if not self._a_nonzero:
            return self._aw_data
        raw = self.space.weighted_mass_data(self.sample(self.coeffs.a, t))
        return self._aw_data + 0.5 * (raw + raw[self._pattern_perm])

    def _matrix(self, data) -> sp.csr_matrix:
        M = self._M
        return sp.csr_matrix((data, M.indices, M.indptr), shape=M.shape)

    def explicit_load(self, u: np.ndarray, t: float) -> np.ndarray:
        """``R(t, u)``: forcing + injection - convection - nonlinearity, as a load."""
        space, c = self.space, self.coeffs
        vals = None
        uq = gq = None
        if c.has_nonlinearity:
            uq = space.values_at_quad(u)
        if self._need_grad:
            gq = space.gradients_at_quad(u)
        if c.has_convection:
            bq = np.column_stack([self.sample(e, t) for e in c.b])
            vals = -np.einsum("qd,qd->q", bq, gq)
        if c.has_nonlinearity:
            at = self.sample(c.a_tilde, t)
            bt = None
            if c.has_gradient_nonlinearity:
                bt = np.column_stack([self.sample(e, t) for e in c.b_tilde])
            nl = _nonlinear_values(c, uq, gq, at, bt)
            vals = -nl if vals is None else vals - nl
        if not _is_zero(c.f):
            fq = self.sample(c.f, t)
            vals = fq if vals is None else vals + fq
        R = space.load(vals) if vals is not None else np.zeros(space.n_dofs)
        if self.injection is not None:
            R = R + self.injection(u, t)
        if self.forcing is not None:
            R = R + self.forcing(t)
        return R

    def step(self, state: SimState) -> SimState:
        dt = self.dt
        t0, t1 = state.t, state.t + dt
        u = state.current
        R0 = self.explicit_load(u, t0)
        Rm = R0 if state.previous_load is None else state.previous_load
        if self._lhs_cache is not None and self._lhs_cache[0] == t0:
            A0 = self._lhs_cache[1]
        else:
            A0 = self._calA_data(t0)
        A1 = self._calA_data(t1)
        rhs = self._matrix(self._base_data - 0.5 * A0) @ u + 0.5 * (3.0 * R0 - Rm)
        lhs = self._matrix(self._base_data + 0.5 * A1)
        u1 = _pcg(lhs, rhs, u, self._precond, self.solver_tol)
        self._lhs_cache = (t1, A1)
        return SimState(t1, u1, R0, state.step_index + 1)


def _transpose_permutation(M: sp.csr_matrix) -> np.ndarray:
    n = M.shape[0]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(M.indptr))
    keys = rows * n + M.indices
    return np.searchsorted(keys, M.indices.astype(np.int64) * n + rows)


def _data_in_pattern(A: sp.csr_matrix, pattern: sp.csr_matrix) -> np.ndarray:
    """Entries of ``A`` laid out in the (superset) sparsity pattern of ``pattern``."""
    n = pattern.shape[0]
    A = A.tocoo()
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(pattern.indptr))
    keys = rows * n + pattern.indices
    want = A.row.astype(np.int64) * n + A.col
    pos = np.searchsorted(keys, want)
    if np.any(keys[np.minimum(pos, keys.size - 1)] != want):
        raise ValueError("matrix pattern is not contained in the mass pattern")
    out = np.zeros(keys.size)
    np.add.at(out, pos, A.data)
    return out


def _pcg(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, precond, tol: float,
         maxiter: int = 200) -> np.ndarray:
    """Preconditioned CG; ``precond`` solves with a fixed nearby matrix."""
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        return np.full_like(b, np.nan)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = x0.copy()
    r = b - A @ x
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= 1e3 * tol * bnorm:
        return x
    raise RuntimeError(f"CG did not converge (relative residual {np.linalg.norm(r) / bnorm:.3e})")


def step(state: SimState, space: FemSpace, coeffs: Coefficients,
         injection: InjectionOperator | None, dt: float) -> SimState:
    """One CN/AB2 step of the error system ``z' + ... = I(Z z)``.

    A convenience wrapper; long runs should reuse a :class:`Stepper`.
    """
    inj = None
    if injection is not None:
        B = injection.sensing.indicator_loads
        inj = lambda u, t: injection.apply_load(B @ u)  # noqa: E731
    return Stepper(space, coeffs, dt, inj).step(state)



def manufactured_forcing(space: FemSpace, coeffs: Coefficients, u_star: Callable[[float], np.ndarray],
                         du_star: Callable[[float], np.ndarray]) -> Callable[[float], np.ndarray]:
    """Load ``F(t)`` making ``u_star`` an exact solution of the semi-discrete system.

    The semi-discrete system is ``M u' + calA(t) u = -C(t) u - N(t, u) + F(t)``
    with ``calA = nu K + M + sym(a-mass)`` and ``C`` the convection matrix.
    Only the coefficient ``f`` must be zero in ``coeffs``; its pointwise
    forcing would otherwise be counted twice.
    """
    if not _is_zero(coeffs.f):
        raise ValueError("coeffs.f must be zero when a manufactured forcing is used")

    def F(t: float) -> np.ndarray:
        u = u_star(t)
        out = space.mass @ du_star(t) + space.a_full @ u + assemble_reaction_convection(coeffs, space, t) @ u
        if coeffs.has_nonlinearity:
            out = out + nonlinear_rhs(coeffs, space, u, t)
        return out

    return F

# -- runs and summaries --------------------------------------------------------

@dataclass
class RunSummary:
    blowup: bool
    t_blowup: float | None
    mu_hat: float | None
    rho_hat: float | None
    times: np.ndarray
    norm_v: np.ndarray
    norm_h: np.ndarray
    inj_norm_h: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def norm_series(self):
        return list(zip(self.times.tolist(), self.norm_v.tolist(), self.norm_h.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "norm_V", "norm_H", "inj_norm_H"])
        for row in zip(self.times, self.norm_v, self.norm_h, self.inj_norm_h):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()

    def summary_dict(self) -> dict:
        out = {
            "blowup": self.blowup,
            "t_blowup": self.t_blowup,
            "mu_hat": self.mu_hat,
            "rho_hat": self.rho_hat,
        }
        for k in ("inj_norm_t0", "S_sigma", "lambda", "ell", "nodes_per_dim", "dt"):
            out[k] = self.meta.get(k)
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary_dict(), indent=2)


def detect_blowup(u: np.ndarray, norm_v: float, norm_v0: float, factor: float = BLOWUP_FACTOR) -> bool:
    """Non-finite entries, or a V-norm above ``factor`` times the initial one."""
    if not np.all(np.isfinite(u)) or not math.isfinite(norm_v):
        return True
    return norm_v > factor * norm_v0


def fit_decay(times, norms, t_start: float, max_pairs: int = 400) -> tuple[float, float]:
    """Least-squares rate ``mu_hat`` of ``log |z|`` on ``[t_start, T]`` and the overshoot ``rho_hat``.

    ``rho_hat = max_{t >= s} |z(t)| e^{mu_hat (t - s)} / |z(s)|`` over a
    decimated set of at most ``max_pairs`` samples from the fit window.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    sel = t >= t_start
    t, y = t[sel], y[sel]
    if t.size < 10:
        raise ValueError(f"need at least 10 samples after t_start={t_start}, got {t.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("norm series must be finite and positive in the fit window")
    ly = np.log(y)
    A = np.column_stack([np.ones_like(t), t - t[0]])
    coef = np.linalg.lstsq(A, ly, rcond=None)[0]
    mu = -float(coef[1])
    idx = np.unique(np.linspace(0, t.size - 1, min(max_pairs, t.size)).round().astype(int))
    g = ly[idx] + mu * t[idx]  # log(|z(t)| e^{mu t})
    # rho = exp(max over s <= t of g(t) - g(s))
    rho = float(np.exp(np.max(g - np.minimum.accumulate(g))))
    return mu, rho


def _normalize_v(space: FemSpace, z0: np.ndarray) -> np.ndarray:
    n = space.norm_v(z0)
    if not n > 0:
        raise ValueError("initial condition has zero V-norm")
    return z0 / n


def _safe_norm_v(space: FemSpace, u: np.ndarray) -> float:
    return space.norm_v(u) if np.all(np.isfinite(u)) else math.inf


def _integrate(stepper: Stepper, u0: np.ndarray, T: float, stride: int,
               inj_norm: Callable[[np.ndarray], float], blowup_factor: float,
               fit_start: float | None, meta: dict) -> RunSummary:
    space = stepper.space
    n_steps = int(round(T / stepper.dt))
    state = SimState(0.0, u0.copy())
    nv0 = space.norm_v(u0)
    times, nv, nh, ni = [0.0], [nv0], [space.norm_h(u0)], [inj_norm(u0)]
    blow, t_bu = False, None
    for j in range(1, n_steps + 1):
        with np.errstate(all="ignore"):
            try:
                state = stepper.step(state)
            except RuntimeError:
                state = SimState(state.t + stepper.dt, np.full_like(state.current, np.nan), None, j)
            v = _safe_norm_v(space, state.current)
        if detect_blowup(state.current, v, nv0, blowup_factor):
            blow, t_bu = True, state.t
            if math.isfinite(v):
                times.append(state.t)
                nv.append(v)
                nh.append(space.norm_h(state.current))
                ni.append(inj_norm(state.current))
            break
        if j % stride == 0 or j == n_steps:
            times.append(state.t)
            nv.append(v)
            nh.append(space.norm_h(state.current))
            ni.append(inj_norm(state.current))
    times = np.array(times)
    nv, nh, ni = np.array(nv), np.array(nh), np.array(ni)
    mu = rho = None
    if not blow and fit_start is not None:
        try:
            mu, rho = fit_decay(times, nv, fit_start)
        except ValueError:
            pass
    return RunSummary(blow, t_bu, mu, rho, times, nv, nh, ni, dict(meta))


def simulate_error(space: FemSpace, coeffs: Coefficients, z0: np.ndarray, T: float, dt: float,
                   injection: InjectionOperator | None = None, stride: int = 100,
                   fit_start: float | None = None, blowup_factor: float = BLOWUP_FACTOR,
                   normalize: bool = True, meta: dict | None = None) -> RunSummary:
    """Integrate the error system with injection ``I(Z z)`` from ``z0``.

    ``z0`` is scaled to unit V-norm unless ``normalize`` is false.  The fit
    window defaults to ``[0.2 T, T]``.
    """
    z0 = _normalize_v(space, z0) if normalize else np.asarray(z0, dtype=float)
    fit_start = 0.2 * T if fit_start is None else fit_start
    if injection is not None:
        B = injection.sensing.indicator_loads
        K, KL = injection.matrix, injection.load_matrix
        inj = lambda u, t: KL @ (B @ u)  # noqa: E731
        inj_norm = lambda u: space.norm_h(K @ (B @ u))  # noqa: E731
    else:
        inj = None
        inj_norm = lambda u: 0.0  # noqa: E731
    m = {"lambda": injection.lam if injection else 0.0, "ell": injection.ell if injection else None,
         "S_sigma": injection.count if injection else 0, "dt": dt,
         "nodes_per_dim": space.grid.nodes_per_dim, "inj_norm_t0": inj_norm(z0)}
    m.update(meta or {})
    stepper = Stepper(space, coeffs, dt, inj)
    return _integrate(stepper, z0, T, stride, inj_norm, blowup_factor, fit_start, m)


class _Observer:
    """Observer side of a coupled run; it is handed output vectors only."""

    def __init__(self, injection: InjectionOperator):
        self._B = injection.sensing.indicator_loads
        self._KL = injection.load_matrix
        self._K = injection.matrix
        self._w: tuple[float, np.ndarray] | None = None

    def receive(self, t: float, w: np.ndarray):
        self._w = (t, np.array(w, dtype=float))

    def load(self, yhat: np.ndarray, t: float) -> np.ndarray:
        tw, w = self._w
        if abs(tw - t) > 1e-12 * max(1.0, abs(t)):
            raise RuntimeError("observer asked for an output it has not received")
        return self._KL @ (self._B @ yhat - w)

    def injection_field(self, yhat: np.ndarray) -> np.ndarray:
        return self._K @ (self._B @ yhat - self._w[1])


def simulate_plant_observer(space: FemSpace, coeffs: Coefficients, y0: np.ndarray, yhat0: np.ndarray,
                            T: float, dt: float, injection: InjectionOperator, output: OutputOperator,
                            stride: int = 100, fit_start: float | None = None,
                            blowup_factor: float = BLOWUP_FACTOR,
                            keep_states: bool = False) -> tuple[RunSummary, RunSummary]:
    """Plant ``y`` and observer ``yhat`` integrated side by side.

    The observer only sees ``w = measure(y)`` at each step; the plant state is
    never handed to it.  Returns summaries for ``y`` and for ``yhat - y``;
    with ``keep_states`` the recorded plant states are stored in the plant
    summary's ``meta["states"]``.
    """
    fit_start = 0.2 * T if fit_start is None else fit_start
    obs = _Observer(injection)
    plant = Stepper(space, coeffs, dt)
    observer = Stepper(space, coeffs, dt, obs.load)
    n_steps = int(round(T / dt))
    ys = SimState(0.0, np.asarray(y0, dtype=float).copy())
    hs = SimState(0.0, np.asarray(yhat0, dtype=float).copy())
    B = output.indicator_loads
    plant_rec: tuple[list, ...] = ([], [], [], [])
    err_rec: tuple[list, ...] = ([], [], [], [])
    states = []

    def record(store, t, u, inj):
        store[0].append(t)
        store[1].append(space.norm_v(u))
        store[2].append(space.norm_h(u))
        store[3].append(inj)

    obs.receive(0.0, B @ ys.current)
    record(plant_rec, 0.0, ys.current, 0.0)
    record(err_rec, 0.0, hs.current - ys.current, space.norm_h(obs.injection_field(hs.current)))
    if keep_states:
        states.append(ys.current.copy())
    nv_plant0 = max(plant_rec[1][0], 1e-300)
    nv_err0 = max(err_rec[1][0], 1e-300)
    blow: dict[str, float | None] = {"plant": None, "error": None}
    for j in range(1, n_steps + 1):
        with np.errstate(all="ignore"):
            # the observer advances with w(t_j); the plant then publishes w(t_{j+1})
            hs = observer.step(hs)
            ys = plant.step(ys)
        obs.receive(ys.t, B @ ys.current)
        e = hs.current - ys.current
        if detect_blowup(ys.current, _safe_norm_v(space, ys.current), nv_plant0, blowup_factor):
            blow["plant"] = ys.t
        ve = _safe_norm_v(space, e)
        if ve > 1e-300 and detect_blowup(e, ve, nv_err0, blowup_factor):
            blow["error"] = hs.t
        if blow["plant"] is not None or blow["error"] is not None:
            break
        if j % stride == 0 or j == n_steps:
            record(plant_rec, ys.t, ys.current, 0.0)
            record(err_rec, hs.t, e, space.norm_h(obs.injection_field(hs.current)))
            if keep_states:
                states.append(ys.current.copy())

    def summarize(rec, key):
        t, nv, nh, ni = (np.array(a) for a in rec)
        mu = rho = None
        if blow[key] is None and np.all(nv[t >= fit_start] > 0):
            try:
                mu, rho = fit_decay(t, nv, fit_start)
            except ValueError:
                pass
        meta = {"lambda": injection.lam, "ell": injection.ell, "S_sigma": injection.count, "dt": dt,
                "nodes_per_dim": space.grid.nodes_per_dim, "inj_norm_t0": float(ni[0])}
        return RunSummary(blow[key] is not None, blow[key], mu, rho, t, nv, nh, ni, meta)

    plant_summary = summarize(plant_rec, "plant")
    if keep_states:
        plant_summary.meta["states"] = states
    return plant_summary, summarize(err_rec, "error")


def persistent_boundedness(space: FemSpace, times, states, window: float) -> dict:
    """A-posteriori boundedness report for a plant trajectory.

    Returns the supremum of ``|y|_V`` and the largest windowed
    ``(int_s^{s+window} |y|_{D(A)}^2)^{1/2}`` over the recorded states.
    """
    t = np.asarray(times, dtype=float)
    nv = np.array([space.norm_v(u) for u in states])
    nda2 = np.array([space.norm_da(u) ** 2 for u in states])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (nda2[1:] + nda2[:-1]) * np.diff(t))])
    worst = 0.0
    for i, s in enumerate(t):
        j = np.searchsorted(t, s + window, side="right") - 1
        if j > i:
            worst = max(worst, cum[j] - cum[i])
    return {"sup_norm_V": float(nv.max()), "window": float(window),
            "max_window_L2_DA": float(math.sqrt(worst))}
