"""Indicator sensors on subrectangles and the associated output operator."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import AssumptionViolation
from .fem import FemSpace, RectDomain

__all__ = [
    "SensorLayout",
    "OutputOperator",
    "sensor_layout",
    "ngrid_layout",
    "assemble_output",
    "measure",
    "lift",
    "layout_to_json",
]


@dataclass(frozen=True, eq=False)
class SensorLayout:
    """Sensor boxes, one per cell of a uniform partition of the domain.

    ``cells_per_dim`` is ``2S`` for the standard family and ``N`` for the
    N-grid family; sensor ``i`` sits at the centre of partition cell ``i``
    and has widths ``r L_j / cells_per_dim``.
    """

    S: int
    r: float
    domain: RectDomain
    cells_per_dim: int
    multi_indices: np.ndarray  # (S_sigma, d), 1-based
    lower: np.ndarray  # (S_sigma, d)
    widths: np.ndarray  # (d,)
    kind: str = "standard"

    @property
    def count(self) -> int:
        return self.lower.shape[0]

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.widths

    @property
    def centers(self) -> np.ndarray:
        return self.lower + 0.5 * self.widths

    @property
    def volumes(self) -> np.ndarray:
        return np.full(self.count, float(np.prod(self.widths)))

    @property
    def cell_widths(self) -> np.ndarray:
        return np.asarray(self.domain.lengths) / self.cells_per_dim

    @property
    def cell_lower(self) -> np.ndarray:
        return (self.multi_indices - 1) * self.cell_widths

    def exact_vandermonde(self) -> np.ndarray:
        """Continuum Gram matrix ``vol(omega_i & omega_j)`` of the indicators."""
        lo = np.maximum(self.lower[:, None, :], self.lower[None, :, :])
        hi = np.minimum(self.upper[:, None, :], self.upper[None, :, :])
        return np.prod(np.clip(hi - lo, 0.0, None), axis=2)


def _layout(count_per_dim, r, domain, lower_of, S, kind):
    if not 0.0 < r < 1.0:
        raise ValueError(f"cover fraction r must lie in (0, 1), got {r}")
    L = np.asarray(domain.lengths)
    d = domain.dim
    mi = np.array(list(itertools.product(range(1, count_per_dim + 1), repeat=d)), dtype=np.int64)
    lower = lower_of(mi, L)
    widths = r * L / count_per_dim
    return SensorLayout(S, float(r), domain, count_per_dim, mi, lower, widths, kind)


def sensor_layout(S: int, r: float, domain: RectDomain) -> SensorLayout:
    """``(2S)^d`` boxes with lower corners ``(2m_j - 1) L_j/(4S) - r L_j/(4S)``."""
    if int(S) != S or S < 1:
        raise ValueError(f"S must be a positive integer, got {S}")
    S = int(S)
    return _layout(
        2 * S, r, domain,
        lambda m, L: (2 * m - 1) * L / (4 * S) - r * L / (4 * S),
        S, "standard",
    )


def ngrid_layout(N: int, r: float, domain: RectDomain) -> SensorLayout:
    """``N^d`` boxes with lower corners ``(2m_j - 1) L_j/(2N) - r L_j/(2N)``.

    ``S`` is recorded as 0 since this family is not indexed by ``S``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    return _layout(
        N, r, domain,
        lambda m, L: (2 * m - 1) * L / (2 * N) - r * L / (2 * N),
        0, "ngrid",
    )


def layout_to_json(layout: SensorLayout) -> str:
    rows = [
        {"index": i, "lower_corner": layout.lower[i].tolist(), "widths": layout.widths.tolist()}
        for i in range(layout.count)
    ]
    return json.dumps(rows, indent=2)


# -- exact integration of P1 hats over boxes ---------------------------------

def _clip_polygon(poly, axis, bound, keep_below):
    """Sutherland-Hodgman clip of a convex polygon against ``x[axis] <= bound`` (or >=)."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = (p[axis] - bound) if keep_below else (bound - p[axis])
        fq = (q[axis] - bound) if keep_below else (bound - q[axis])
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


def _area_centroid(poly):
    P = np.asarray(poly)
    x, y = P[:, 0], P[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    A = 0.5 * cross.sum()
    if abs(A) < 1e-300:
        return 0.0, P.mean(axis=0)
    cx = ((x + xs) * cross).sum() / (6 * A)
    cy = ((y + ys) * cross).sum() / (6 * A)
    return abs(A), np.array([cx, cy])


def _box_loads(space: FemSpace, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Row vector ``int_box phi_k`` over all free DOFs, exact for P1."""
    g = space.grid
    coords = g.node_coords
    el = g.elements
    X = coords[el]
    emin, emax = X.min(axis=1), X.max(axis=1)
    hit = np.flatnonzero(np.all((emax > lo) & (emin < hi), axis=1))
    full = np.zeros(g.n_nodes)
    grads = space.element_gradients
    for e in hit:
        verts = X[e]
        if g.dim == 1:
            a, b = max(verts[0, 0], lo[0]), min(verts[1, 0], hi[0])
            meas = b - a
            if meas <= 0:
                continue
            c = np.array([0.5 * (a + b)])
        else:
            poly = [v for v in verts]
            for axis in range(2):
                poly = _clip_polygon(poly, axis, lo[axis], keep_below=False)
                if not poly:
                    break
                poly = _clip_polygon(poly, axis, hi[axis], keep_below=True)
                if not poly:
                    break
            if len(poly) < 3:
                continue
            meas, c = _area_centroid(poly)
            if meas <= 0:
                continue
        # barycentric values at the centroid: lambda_a(c) = delta_a0 + grad_a . (c - v0)
        lam = grads[e] @ (c - verts[0])
        lam[0] += 1.0
        np.add.at(full, el[e], meas * lam)
    return full[g.free]


@dataclass(eq=False)
class OutputOperator:
    """Measurements ``w_i = (1_{omega_i}, z)_H`` and the lift back to fields.

    ``vandermonde`` is the Gram matrix of the sensors viewed as elements of
    the discrete pivot space, ``B M^{-1} B'``; with it the lift composed with
    the measurement is exactly the discrete orthogonal projection onto the
    sensor span.
    """

    layout: SensorLayout
    space: FemSpace
    indicator_loads: np.ndarray  # (S_sigma, ndof)

    def __post_init__(self):
        V = self.indicator_loads @ self.indicator_fields
        V = 0.5 * (V + V.T)
        self.vandermonde = V
        try:
            self._chol = sla.cho_factor(V)
        except np.linalg.LinAlgError as exc:
            raise AssumptionViolation(
                "sensor Vandermonde matrix is singular: sensors are not linearly independent"
            ) from exc
        if np.linalg.cond(V) > 1e12:
            raise AssumptionViolation(
                f"sensor Vandermonde matrix is numerically singular (cond={np.linalg.cond(V):.3e})"
            )

    @cached_property
    def indicator_fields(self) -> np.ndarray:
        """(ndof, S_sigma) L2 projections of the indicators, ``M^{-1} B'``."""
        return self.space.solve_mass(self.indicator_loads.T.copy())

    @property
    def count(self) -> int:
        return self.indicator_loads.shape[0]

    def solve_vandermonde(self, w: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._chol, w)


def assemble_output(layout: SensorLayout, space: FemSpace) -> OutputOperator:
    """Exact indicator load vectors for every sensor box."""
    if layout.domain.lengths != space.grid.domain.lengths:
        raise ValueError("layout and FEM space live on different domains")
    B = np.vstack([_box_loads(space, lo, hi) for lo, hi in zip(layout.lower, layout.upper)])
    return OutputOperator(layout, space, B)


def measure(op: OutputOperator, z: np.ndarray) -> np.ndarray:
    return op.indicator_loads @ z


def lift(op: OutputOperator, w: np.ndarray) -> np.ndarray:
    """``sum_i ([V]^{-1} w)_i 1_{omega_i}``, as a field of the FEM space."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != op.count:
        raise ValueError(f"expected {op.count} measurements, got {w.shape[0]}")
    return op.indicator_fields @ op.solve_vandermonde(w)
