"""Auxiliary families, oblique projections and Poincare-like constants."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import AssumptionViolation
from .fem import BC, DENSE_EIG_LIMIT, FemSpace, eigenpairs
from .sensing import OutputOperator, SensorLayout

__all__ = [
    "AuxKind",
    "AuxFamily",
    "ObliqueProjector",
    "Sin2Ratios",
    "NormCheck",
    "build_aux_family",
    "sin2_member",
    "oblique_onto_aux",
    "oblique_onto_sensors",
    "poincare_beta",
    "poincare_alpha",
    "gram_matrix",
    "analytic_sin2_ratios",
    "sin2_quadrature_ratios",
    "p1_norm_check",
]


class AuxKind(str, enum.Enum):
    EIGENFUNCTIONS = "eigenfunctions"
    SIN2 = "sin2"
    INV_A2_INDICATORS = "inv_a2_indicators"


@dataclass(eq=False)
class AuxFamily:
    kind: AuxKind
    layout: SensorLayout
    members: np.ndarray  # (ndof, S_sigma)
    gram_h: np.ndarray

    @property
    def S(self) -> int:
        return self.layout.S

    @property
    def count(self) -> int:
        return self.members.shape[1]


def sin2_member(layout: SensorLayout, i: int):
    """Pointwise ``prod_j sin^2(k pi (x_j - c_j)/L_j)`` on partition cell ``i``, zero elsewhere.

    ``k`` is the number of cells per dimension and ``c`` the cell's lower
    corner, so the bump vanishes with its first derivative on the cell
    boundary.  Returns ``f(x)`` for an (n, d) array.
    """
    L = np.asarray(layout.domain.lengths)
    k = layout.cells_per_dim
    lo = layout.cell_lower[i]
    hi = lo + layout.cell_widths

    def f(x):
        x = np.atleast_2d(x)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        vals = np.prod(np.sin(k * np.pi * (x - lo) / L) ** 2, axis=1)
        return np.where(inside, vals, 0.0)

    return f


def _eigen_member(space: FemSpace, L, idx):
    dirichlet = space.grid.bc is BC.DIRICHLET

    def f(x):
        out = np.ones(x.shape[0])
        for j, m in enumerate(idx):
            if dirichlet:
                out = out * np.sin(m * np.pi * x[:, j] / L[j])
            else:
                out = out * np.cos((m - 1) * np.pi * x[:, j] / L[j])
        return out

    return f


def build_aux_family(kind: AuxKind | str, space: FemSpace, layout: SensorLayout,
                     output: OutputOperator | None = None) -> AuxFamily:
    """Auxiliary family with one member per sensor.

    Analytic members (eigenfunctions, sin^2 bumps) are represented by their
    nodal interpolants; the ``A^{-2}``-indicator members solve
    ``(nu K + M) M^{-1} (nu K + M) q = load(1_omega)``.
    """
    kind = AuxKind(kind)
    L = np.asarray(layout.domain.lengths)
    if kind is AuxKind.SIN2:
        cols = [space.interpolate(sin2_member(layout, i)) for i in range(layout.count)]
        W = np.column_stack(cols)
    elif kind is AuxKind.EIGENFUNCTIONS:
        cols = [space.interpolate(_eigen_member(space, L, idx)) for idx in layout.multi_indices]
        W = np.column_stack(cols)
    else:
        if output is None:
            from .sensing import assemble_output
            output = assemble_output(layout, space)
        B = output.indicator_loads
        W = space.solve_a(space.mass @ space.solve_a(B.T.copy()))
    gram = W.T @ (space.mass @ W)
    gram = 0.5 * (gram + gram.T)
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise AssumptionViolation(f"{kind.value} family is linearly dependent") from exc
    return AuxFamily(kind, layout, W, gram)


class ObliqueProjector:
    """The pair of oblique projections between the sensor and auxiliary spans.

    ``cross_gram[i, j] = (w_i, aux_j)_H``.  It is invertible exactly when
    ``H`` is the direct sum of the sensor span and the orthogonal complement
    of the auxiliary span.
    """

    def __init__(self, sensors: OutputOperator, aux: AuxFamily):
        if sensors.count != aux.count:
            raise AssumptionViolation(
                f"{sensors.count} sensors but {aux.count} auxiliary functions"
            )
        self.sensors = sensors
        self.aux = aux
        self.space = sensors.space
        G = sensors.indicator_loads @ aux.members
        self.cross_gram = G
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > 1e12:
            raise AssumptionViolation(
                f"direct-sum condition fails: cross Gram matrix is singular (cond={cond:.3e})"
            )
        self._lu = sla.lu_factor(G)

    def aux_coefficients(self, z: np.ndarray) -> np.ndarray:
        """Coefficients of ``P_{aux}^{W perp} z`` in the auxiliary basis."""
        return sla.lu_solve(self._lu, self.sensors.indicator_loads @ z)

    def onto_aux(self, z: np.ndarray) -> np.ndarray:
        return self.aux.members @ self.aux_coefficients(z)

    def onto_sensors(self, q: np.ndarray) -> np.ndarray:
        c = sla.lu_solve(self._lu, self.aux.members.T @ (self.space.mass @ q), trans=1)
        return self.sensors.indicator_fields @ c

    def complement(self, z: np.ndarray) -> np.ndarray:
        """``P_{W perp}^{aux} z = z - P_{aux}^{W perp} z``."""
        return z - self.onto_aux(z)

    @cached_property
    def norm_onto_aux(self) -> float:
        """Operator norm of ``P_{aux}^{W perp}`` in ``L(H)``."""
        return _projector_h_norm(self.space, self.aux.members, self.sensors.indicator_fields,
                                 self.cross_gram)


def _projector_h_norm(space, range_basis, kernel_dual_fields, cross):
    # P = R G^{-1} F' M with F the dual fields; |P|_H^2 = max eig of (R'MR) G^{-1} (F'MF) G^{-T}
    RMR = range_basis.T @ (space.mass @ range_basis)
    FMF = kernel_dual_fields.T @ (space.mass @ kernel_dual_fields)
    Gi = np.linalg.inv(cross)
    T = RMR @ Gi @ FMF @ Gi.T
    return float(math.sqrt(max(np.max(np.real(np.linalg.eigvals(T))), 0.0)))


def oblique_onto_aux(proj: ObliqueProjector, z: np.ndarray) -> np.ndarray:
    return proj.onto_aux(z)


def oblique_onto_sensors(proj: ObliqueProjector, q: np.ndarray) -> np.ndarray:
    return proj.onto_sensors(q)


# -- Poincare-like constants -------------------------------------------------

def poincare_beta(sensors: OutputOperator, method: str = "auto", tol: float = 1e-10) -> float:
    """Smallest ``|Q|^2_{D(A)} / |Q|^2_V`` over fields with zero sensor measurements.

    ``method="dense"`` uses an orthonormal null-space basis of the
    measurement matrix and a dense symmetric pencil; ``"lanczos"`` runs
    ARPACK on the constrained inverse, eliminating the sensor constraints
    through a small Schur complement.  ``"auto"`` picks dense up to
    the dense-eigensolver size limit.
    """
    space = sensors.space
    B = sensors.indicator_loads
    n = space.n_dofs
    if sensors.count >= n:
        raise ValueError(f"constraint space is empty: {sensors.count} sensors, {n} DOFs")
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_LIMIT else "lanczos"
    Aw = space.a_full
    if method == "dense":
        Q, _ = np.linalg.qr(B.T, mode="complete")
        N = Q[:, sensors.count:]
        AN = (Aw @ N)
        D = AN.T @ space.solve_mass(AN)
        Vr = N.T @ AN
        vals = sla.eigh(0.5 * (D + D.T), 0.5 * (Vr + Vr.T), eigvals_only=True, subset_by_index=[0, 0])
        return float(vals[0])
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    # T x solves D Q = Aw x + B' mu with B Q = 0; T is V-self-adjoint with eigenvalues 1/beta
    def d_inv(x):
        return space.solve_a(space.mass @ space.solve_a(x))

    DiBt = np.column_stack([d_inv(B[i]) for i in range(sensors.count)])
    schur = sla.cho_factor(B @ DiBt)

    def T(x):
        y = d_inv(Aw @ x)
        return y - DiBt @ sla.cho_solve(schur, B @ y)

    op = spla.LinearOperator((n, n), matvec=lambda x: Aw @ T(x), dtype=float)
    minv = spla.LinearOperator((n, n), matvec=space.solve_a, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    vals = spla.eigsh(op, k=1, M=Aw, Minv=minv, which="LA", v0=v0, tol=tol,
                      return_eigenvectors=False)
    return float(1.0 / vals[0])


def gram_matrix(aux: AuxFamily, space: FemSpace, ell: float, n_modes: int | None = None) -> np.ndarray:
    """Gram matrix of ``(A^{ell/2} q_i, A^{ell/2} q_j)_H`` over the family.

    Exact algebra for ``ell`` in {0, 1, 2}; other values use a truncated
    expansion in the first ``n_modes`` discrete eigenpairs (default
    ``min(ndof, 400)``).
    """
    W = aux.members
    if ell == 0:
        G = W.T @ (space.mass @ W)
    elif ell == 1:
        G = W.T @ (space.a_full @ W)
    elif ell == 2:
        AW = space.a_full @ W
        G = AW.T @ space.solve_mass(AW)
    else:
        if not 0 <= ell <= 2:
            raise ValueError(f"ell must lie in [0, 2], got {ell}")
        n_modes = min(space.n_dofs, 400) if n_modes is None else n_modes
        pairs = eigenpairs(space, n_modes)
        E = np.column_stack([p.vector for p in pairs])
        alpha = np.array([p.value for p in pairs])
        C = E.T @ (space.mass @ W)
        G = (C * alpha[:, None] ** ell).T @ C
    return 0.5 * (G + G.T)


def poincare_alpha(aux: AuxFamily, space: FemSpace, ell: float, n_modes: int | None = None) -> float:
    """Smallest ``|q|^2_{D(A^{ell/2})} / |q|^2_{D(A)}`` over the auxiliary span."""
    G = gram_matrix(aux, space, ell, n_modes)
    G2 = gram_matrix(aux, space, 2)
    s = 1.0 / np.sqrt(np.diag(G2))
    Gs, G2s = G * np.outer(s, s), G2 * np.outer(s, s)
    if ell == 2:
        Gs = G2s
    return float(sla.eigh(Gs, G2s, eigvals_only=True, subset_by_index=[0, 0])[0])


# -- sin^2 family: closed forms and quadrature oracles ----------------------

@dataclass(frozen=True)
class Sin2Ratios:
    cells_per_dim: int
    c1: float
    c2_printed: float
    v_over_h: float  # C1 k^2 + 1
    da_over_h: float  # exact, including the mixed second derivatives
    da_over_h_printed: float  # C2 k^4 + 2 C1 k^2 + 1 with the printed C2
    da_over_h_quadrature: float


def _sin2_1d_integrals(k: int, L: float, n_points: int = 64):
    # Gauss-Legendre on (0, L/k): int s^2, int s'^2, int s''^2 for s = sin^2(k pi x / L)
    xg, wg = np.polynomial.legendre.leggauss(n_points)
    a, b = 0.0, L / k
    x = 0.5 * (b - a) * xg + 0.5 * (a + b)
    w = 0.5 * (b - a) * wg
    om = k * np.pi / L
    s = np.sin(om * x) ** 2
    s1 = om * np.sin(2 * om * x)
    s2 = 2 * om ** 2 * np.cos(2 * om * x)
    return float(w @ s ** 2), float(w @ s1 ** 2), float(w @ s2 ** 2)


def analytic_sin2_ratios(cells_per_dim: int, nu: float, lengths) -> Sin2Ratios:
    """Norm ratios of a sin^2 bump with ``cells_per_dim`` bumps per direction.

    ``C1 = (4 nu pi^2 / 3) sum 1/L_i^2`` and the printed
    ``C2 = (16 nu^2 pi^4 / 3) sum 1/L_i^2``.  ``da_over_h`` is the exact
    tensor-product value; ``da_over_h_quadrature`` recomputes it from 1D
    Gauss-Legendre integrals.  The printed and exact values coincide for
    ``d = 1, L = 1`` only.
    """
    L = np.asarray(lengths, dtype=float)
    k = int(cells_per_dim)
    inv2 = np.sum(1.0 / L ** 2)
    c1 = 4 * nu * np.pi ** 2 / 3 * inv2
    c2 = nu ** 2 * 16 * np.pi ** 4 / 3 * inv2
    om2 = (k * np.pi / L) ** 2
    grad = 4.0 / 3.0 * om2  # |s'|^2 / |s|^2 per direction
    hess = 16.0 / 3.0 * om2 ** 2  # |s''|^2 / |s|^2 per direction
    mixed = np.sum(grad) ** 2 - np.sum(grad ** 2)
    exact = nu ** 2 * (np.sum(hess) + mixed) + 2 * nu * np.sum(grad) + 1.0

    ints = np.array([_sin2_1d_integrals(k, Lj) for Lj in L])
    g = ints[:, 1] / ints[:, 0]
    h = ints[:, 2] / ints[:, 0]
    quad = nu ** 2 * (np.sum(h) + np.sum(g) ** 2 - np.sum(g ** 2)) + 2 * nu * np.sum(g) + 1.0
    return Sin2Ratios(
        cells_per_dim=k,
        c1=float(c1),
        c2_printed=float(c2),
        v_over_h=float(c1 * k ** 2 + 1),
        da_over_h=float(exact),
        da_over_h_printed=float(c2 * k ** 4 + 2 * c1 * k ** 2 + 1),
        da_over_h_quadrature=float(quad),
    )


def sin2_quadrature_ratios(layout: SensorLayout, nu: float, coefficients: np.ndarray,
                           points_per_cell: int = 8) -> tuple[float, float]:
    """``(|theta|_V^2/|theta|_H^2, |theta|_{D(A)}^2/|theta|_H^2)`` by direct quadrature.

    ``theta = sum c_i Phi_i`` is evaluated from closed-form derivatives of
    the bumps at tensor Gauss points of every partition cell; the integrals
    are therefore exact up to the quadrature order ``points_per_cell``.
    """
    L = np.asarray(layout.domain.lengths)
    d = layout.domain.dim
    k = layout.cells_per_dim
    om = k * np.pi / L
    xg, wg = np.polynomial.legendre.leggauss(points_per_cell)
    c = np.asarray(coefficients, dtype=float)
    l2 = v = da = 0.0
    for i in range(layout.count):
        lo = layout.cell_lower[i]
        cw = layout.cell_widths
        xs = [lo[j] + 0.5 * cw[j] * (xg + 1) for j in range(d)]
        ws = [0.5 * cw[j] * wg for j in range(d)]
        s = [np.sin(om[j] * (xs[j] - lo[j])) ** 2 for j in range(d)]
        s1 = [om[j] * np.sin(2 * om[j] * (xs[j] - lo[j])) for j in range(d)]
        s2 = [2 * om[j] ** 2 * np.cos(2 * om[j] * (xs[j] - lo[j])) for j in range(d)]
        if d == 1:
            phi, grad2, lap, w = s[0], s1[0] ** 2, s2[0], ws[0]
        else:
            phi = np.outer(s[0], s[1])
            grad2 = np.outer(s1[0], s[1]) ** 2 + np.outer(s[0], s1[1]) ** 2
            lap = np.outer(s2[0], s[1]) + np.outer(s[0], s2[1])
            w = np.outer(ws[0], ws[1])
        ci = c[i]
        # cells are disjoint, so theta restricted to cell i is c_i Phi_i
        l2 += np.sum(w * (ci * phi) ** 2)
        v += np.sum(w * ci ** 2 * (nu * grad2 + phi ** 2))
        da += np.sum(w * (ci * (-nu * lap + phi)) ** 2)
    return float(v / l2), float(da / l2)


@dataclass(frozen=True)
class NormCheck:
    ok: bool
    condition_number: float
    matrix: np.ndarray


def p1_norm_check(layout: SensorLayout) -> NormCheck:
    """Whether the measurements of ``d + 1`` designated sensors separate affine functions.

    The designated sensors have multi-indices ``j`` in ``{1, 2}^d`` with
    ``sum(j) <= d + 1``; the matrix holds their exact integrals of
    ``1, x_1, ..., x_d``.
    """
    d = layout.domain.dim
    mi = layout.multi_indices
    pick = [i for i in range(layout.count) if np.all(mi[i] <= 2) and mi[i].sum() <= d + 1]
    rows = []
    for i in pick:
        lo, hi = layout.lower[i], layout.upper[i]
        vol = float(np.prod(hi - lo))
        rows.append([vol] + [vol * 0.5 * (lo[j] + hi[j]) for j in range(d)])
    Mx = np.array(rows)
    if Mx.shape != (d + 1, d + 1):
        return NormCheck(False, math.inf, Mx)
    cond = float(np.linalg.cond(Mx))
    return NormCheck(bool(np.isfinite(cond) and cond < 1e12), cond, Mx)
