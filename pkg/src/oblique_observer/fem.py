"""P1 finite elements on uniform rectangular grids.

The discrete operator is ``A = -nu*Laplace + 1`` with Neumann or Dirichlet
boundary conditions.  With mass matrix ``M`` and stiffness ``K`` the discrete
inner products are

    (u, v)_H    = u' M v
    (u, v)_V    = u' (nu K + M) v
    |u|_{D(A)}  = |M^{-1} (nu K + M) u|_H

Dirichlet conditions are imposed by eliminating boundary nodes, so every
coefficient vector handled by :class:`FemSpace` lives on the free DOFs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "BC",
    "RectDomain",
    "Grid",
    "FemSpace",
    "EigenPair",
    "build_grid",
    "assemble",
    "eigenpairs",
    "project_field",
]

DENSE_EIG_LIMIT = 5000


class BC(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class RectDomain:
    """The box ``(0, L_1) x ... x (0, L_d)``."""

    lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) not in (1, 2):
            raise ValueError(f"only d in {{1, 2}} is supported, got d={len(lengths)}")
        if any(not (v > 0) for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))


@dataclass(frozen=True, eq=False)
class Grid:
    domain: RectDomain
    nodes_per_dim: int
    bc: BC
    node_coords: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    free: np.ndarray

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (self.nodes_per_dim - 1) for L in self.domain.lengths)

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.free.size


def build_grid(domain: RectDomain, nodes_per_dim: int, bc: BC | str = BC.NEUMANN) -> Grid:
    """Uniform tensor grid split into segments (d=1) or triangles (d=2).

    Nodes are numbered lexicographically with the first coordinate running
    fastest.  Each 2D cell ``(v00, v10, v11, v01)`` is split along the
    ``v00-v11`` diagonal into two counter-clockwise triangles.
    """
    bc = BC(bc)
    n = int(nodes_per_dim)
    if n < 3:
        raise ValueError(f"nodes_per_dim must be >= 3, got {nodes_per_dim}")
    axes = [np.linspace(0.0, L, n) for L in domain.lengths]
    if domain.dim == 1:
        coords = axes[0][:, None]
        idx = np.arange(n - 1)
        elements = np.column_stack([idx, idx + 1])
        boundary = np.zeros(n, dtype=bool)
        boundary[[0, -1]] = True
    else:
        X1, X2 = np.meshgrid(axes[0], axes[1], indexing="xy")
        coords = np.column_stack([X1.ravel(), X2.ravel()])
        i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="xy")
        v00 = (i + n * j).ravel()
        v10, v01 = v00 + 1, v00 + n
        v11 = v01 + 1
        elements = np.concatenate(
            [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
        )
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        boundary = ((ii == 0) | (ii == n - 1) | (jj == 0) | (jj == n - 1)).ravel()
    if bc is BC.DIRICHLET:
        free = np.flatnonzero(~boundary)
    else:
        free = np.arange(coords.shape[0])
    return Grid(domain, n, bc, coords, elements, boundary, free)


# Gauss rules in barycentric coordinates: 2 points on segments, 3 on triangles.
_QUAD = {
    1: (
        np.array([[0.5 + 0.5 / math.sqrt(3.0), 0.5 - 0.5 / math.sqrt(3.0)],
                  [0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)]]),
        np.array([0.5, 0.5]),
    ),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
}


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray


class FemSpace:
    """Assembled P1 space: matrices, quadrature data and discrete norms.

    Quadrature arrays are flattened over (element, point):

    * ``quad_points``  (Q, d) physical coordinates
    * ``quad_weights`` (Q,) absolute weights, so ``sum(w * f(x))`` ~ integral
    * ``quad_element`` (Q,) owning element
    * ``evaluate``     (Q, ndof) sparse, values of a field at the points
    * ``gradient``     list of d sparse (E, ndof), element-constant derivatives
    """

    def __init__(self, grid: Grid, nu: float):
        if not nu > 0:
            raise ValueError(f"nu must be positive, got {nu}")
        self.grid = grid
        self.nu = float(nu)
        self._assemble()

    # -- assembly -----------------------------------------------------------
    def _assemble(self):
        g = self.grid
        d = g.dim
        el = g.elements
        nloc = d + 1
        X = g.node_coords[el]  # (E, d+1, d)
        J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))  # (E, d, d)
        detJ = np.linalg.det(J)
        vol = np.abs(detJ) / math.factorial(d)
        Jinv_T = np.transpose(np.linalg.inv(J), (0, 2, 1))
        ref = np.vstack([-np.ones((1, d)), np.eye(d)])  # grads of barycentrics on the reference simplex
        grads = np.einsum("eij,aj->eai", Jinv_T, ref)  # (E, d+1, d)

        full_to_free = -np.ones(g.n_nodes, dtype=np.int64)
        full_to_free[g.free] = np.arange(g.free.size)
        loc = full_to_free[el]  # (E, d+1), -1 on eliminated nodes
        ndof = g.free.size
        self.n_dofs = ndof

        rows = np.repeat(loc, nloc, axis=1)  # (E, nloc*nloc)
        cols = np.tile(loc, (1, nloc))
        keep = (rows >= 0) & (cols >= 0)

        mref = (np.ones((nloc, nloc)) + np.eye(nloc)) / ((d + 1) * (d + 2))
        Mloc = vol[:, None, None] * mref[None]
        Kloc = vol[:, None, None] * np.einsum("eai,ebi->eab", grads, grads)

        def coo(data):
            data = data.reshape(len(el), -1)
            A = sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(ndof, ndof)).tocsr()
            A.sum_duplicates()
            A = 0.5 * (A + A.T)
            return A.tocsr()

        self.mass = coo(Mloc)
        self.stiffness = coo(Kloc)
        self.a_full = (self.nu * self.stiffness + self.mass).tocsr()

        lam, w = _QUAD[d]
        nq = lam.shape[0]
        self.element_volumes = vol
        self.element_gradients = grads
        self.quad_points = np.einsum("qa,ead->eqd", lam, X).reshape(-1, d)
        self.quad_weights = (vol[:, None] * w[None, :]).ravel()
        self.quad_element = np.repeat(np.arange(len(el)), nq)
        self._quad_basis = lam

        qrows = np.repeat(np.arange(len(el) * nq), nloc)
        qcols = np.repeat(loc, nq, axis=0).ravel()
        qdata = np.tile(lam, (len(el), 1)).ravel()
        ok = qcols >= 0
        self.evaluate = sp.csr_matrix(
            (qdata[ok], (qrows[ok], qcols[ok])), shape=(len(el) * nq, ndof)
        )
        self.load_operator = (self.evaluate.T @ sp.diags(self.quad_weights)).tocsr()

        erows = np.repeat(np.arange(len(el)), nloc)
        ecols = loc.ravel()
        eok = ecols >= 0
        self.gradient = [
            sp.csr_matrix((grads[:, :, k].ravel()[eok], (erows[eok], ecols[eok])), shape=(len(el), ndof))
            for k in range(d)
        ]

        # Weighted-mass pattern: data of int(c phi_a phi_b) in the CSR layout of `mass`.
        M = self.mass
        keys_csr = np.repeat(np.arange(ndof), np.diff(M.indptr)) * ndof + M.indices
        pair_rows = np.repeat(np.repeat(loc, nloc, axis=1), nq, axis=0)  # (E*nq, nloc*nloc)
        pair_cols = np.repeat(np.tile(loc, (1, nloc)), nq, axis=0)
        phi_pair = np.einsum("qa,qb->qab", lam, lam).reshape(nq, -1)
        pair_val = np.tile(phi_pair, (len(el), 1)) * self.quad_weights[:, None]
        pk = (pair_rows >= 0) & (pair_cols >= 0)
        pos = np.searchsorted(keys_csr, (pair_rows * ndof + pair_cols)[pk])
        qidx = np.broadcast_to(np.arange(len(el) * nq)[:, None], pair_rows.shape)[pk]
        self._weighted_mass_map = sp.csr_matrix(
            (pair_val[pk], (pos, qidx)), shape=(M.nnz, len(el) * nq)
        )

    # -- factorizations -----------------------------------------------------
    @cached_property
    def _mass_lu(self):
        return spla.splu(self.mass.tocsc())

    @cached_property
    def _a_lu(self):
        return spla.splu(self.a_full.tocsc())

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        return self._mass_lu.solve(np.asarray(rhs, dtype=float))

    def solve_a(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(nu K + M) u = rhs`` (rhs is a load vector)."""
        return self._a_lu.solve(np.asarray(rhs, dtype=float))

    # -- discrete operators -------------------------------------------------
    def apply_A(self, u: np.ndarray) -> np.ndarray:
        """Strong discrete operator ``M^{-1}(nu K + M) u`` (a field)."""
        return self.solve_mass(self.a_full @ u)

    def inverse_A(self, f: np.ndarray) -> np.ndarray:
        """``A^{-1} f`` for a field ``f``: solve ``(nu K + M) u = M f``."""
        return self.solve_a(self.mass @ f)

    def weighted_mass(self, values_at_quad: np.ndarray) -> sp.csr_matrix:
        """Galerkin matrix of ``u -> c u`` with ``c`` sampled at the quadrature points."""
        data = self._weighted_mass_map @ np.asarray(values_at_quad, dtype=float)
        A = sp.csr_matrix((data, self.mass.indices, self.mass.indptr), shape=self.mass.shape)
        return (0.5 * (A + A.T)).tocsr()

    def weighted_mass_data(self, values_at_quad: np.ndarray) -> np.ndarray:
        """CSR data of :meth:`weighted_mass` in the sparsity layout of ``mass`` (unsymmetrized)."""
        return self._weighted_mass_map @ values_at_quad

    def load(self, values_at_quad: np.ndarray) -> np.ndarray:
        """Load vector ``int f phi_k`` from values of ``f`` at the quadrature points."""
        return self.load_operator @ values_at_quad

    def values_at_quad(self, u: np.ndarray) -> np.ndarray:
        return self.evaluate @ u

    def gradients_at_quad(self, u: np.ndarray) -> np.ndarray:
        """(Q, d) gradient of ``u``; constant per element."""
        ge = np.column_stack([G @ u for G in self.gradient])
        return ge[self.quad_element]

    def full_vector(self, u: np.ndarray) -> np.ndarray:
        """Nodal values on every grid node (zeros at eliminated Dirichlet nodes)."""
        out = np.zeros(self.grid.n_nodes)
        out[self.grid.free] = u
        return out

    @property
    def dof_coords(self) -> np.ndarray:
        return self.grid.node_coords[self.grid.free]

    def interpolate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Nodal interpolant on the free DOFs; ``f`` takes an (n, d) array."""
        return np.asarray(f(self.dof_coords), dtype=float) * np.ones(self.n_dofs)

    # -- norms --------------------------------------------------------------
    def inner_h(self, u, v) -> float:
        return float(u @ (self.mass @ v))

    def inner_v(self, u, v) -> float:
        return float(u @ (self.a_full @ v))

    def norm_h(self, u) -> float:
        return math.sqrt(max(self.inner_h(u, u), 0.0))

    def norm_v(self, u) -> float:
        return math.sqrt(max(self.inner_v(u, u), 0.0))

    def norm_da(self, u) -> float:
        return self.norm_h(self.apply_A(u))

    def inner_da(self, u, v) -> float:
        return self.inner_h(self.apply_A(u), self.apply_A(v))


def assemble(grid: Grid, nu: float) -> FemSpace:
    """Assemble the P1 mass and stiffness matrices of ``grid``."""
    return FemSpace(grid, nu)


def project_field(space: FemSpace, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """L2 projection of a pointwise function onto the FEM space.

    ``f`` receives an (n, d) array of points and returns n values.
    """
    vals = np.asarray(f(space.quad_points), dtype=float) * np.ones(space.quad_points.shape[0])
    return space.solve_mass(space.load(vals))


def eigenpairs(space: FemSpace, count: int) -> list[EigenPair]:
    """Smallest ``count`` generalized eigenpairs of ``(nu K + M, M)``, M-orthonormal.

    Raises ``RuntimeError`` with the worst residual if the solver result is inaccurate.
    """
    n = space.n_dofs
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    A, M = space.a_full, space.mass
    if n <= DENSE_EIG_LIMIT:
        vals, vecs = sla.eigh(A.toarray(), M.toarray(), subset_by_index=[0, count - 1])
    else:
        vals, vecs = spla.eigsh(A.tocsc(), k=count, M=M.tocsc(), sigma=0.0, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # M-orthonormalize (eigsh already nearly does)
        G = vecs.T @ (M @ vecs)
        vecs = vecs @ np.linalg.inv(np.linalg.cholesky(G)).T
    res = A @ vecs - (M @ vecs) * vals
    scale = np.maximum(np.abs(vals), 1.0) * np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))
    worst = float(np.max(np.linalg.norm(res, axis=0) / scale))
    if not np.isfinite(worst) or worst > 1e-6:
        raise RuntimeError(f"eigensolver did not converge (relative residual {worst:.3e})")
    return [EigenPair(float(v), vecs[:, k].copy()) for k, v in enumerate(vals)]
