"""The output-injection operator ``-lam A^{-1} P_W A^ell P_aux Z`` and its norm bounds."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from .auxspaces import ObliqueProjector, _projector_h_norm, gram_matrix
from .fem import FemSpace, eigenpairs
from .sensing import OutputOperator

__all__ = [
    "InjectionOperator",
    "NormReport",
    "build_injection",
    "apply",
    "operator_norm_report",
    "injected_energy_check",
]


class InjectionOperator:
    """Injection acting on output residuals ``Z yhat - w`` in ``R^{S_sigma}``.

    With ``G = B aux`` (the cross Gram matrix), ``F = (nu K + M)^{-1} B'`` and
    ``Gram_ell = (A^{ell/2} aux_i, A^{ell/2} aux_j)_H`` the whole composition
    collapses to ``-lam F G^{-T} Gram_ell G^{-1}``, which is stored as a
    dense ``(ndof, S_sigma)`` matrix.  So ``A^ell`` only ever touches members
    of the auxiliary family.
    """

    def __init__(self, lam: float, ell: float, sensing: OutputOperator, proj: ObliqueProjector,
                 space: FemSpace, n_modes: int | None = None):
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        if not 0 <= ell <= 2:
            raise ValueError(f"ell must lie in [0, 2], got {ell}")
        if proj.sensors is not sensing:
            raise ValueError("projector was built for a different output operator")
        self.lam = float(lam)
        self.ell = float(ell)
        self.sensing = sensing
        self.proj = proj
        self.space = space
        self.gram_ell = gram_matrix(proj.aux, space, ell, n_modes)
        lu = proj._lu
        Gi_gram = sla.lu_solve(lu, self.gram_ell, trans=1)  # G^{-T} Gram
        self.coefficient_map = sla.lu_solve(lu, Gi_gram.T, trans=1).T  # G^{-T} Gram G^{-1}
        self.lifted_sensors = space.solve_a(sensing.indicator_loads.T.copy())  # F
        self.matrix = -self.lam * (self.lifted_sensors @ self.coefficient_map)
        self.load_matrix = space.mass @ self.matrix  # M I, the right-hand-side load

    @property
    def count(self) -> int:
        return self.sensing.count

    def apply(self, residual: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(residual, dtype=float)

    def apply_load(self, residual: np.ndarray) -> np.ndarray:
        """``M I(residual)``, the Galerkin load of the injected field."""
        return self.load_matrix @ np.asarray(residual, dtype=float)

    def scaled(self, lam: float) -> "InjectionOperator":
        return InjectionOperator(lam, self.ell, self.sensing, self.proj, self.space)


def build_injection(lam: float, ell: float, sensing: OutputOperator, proj: ObliqueProjector,
                    space: FemSpace, n_modes: int | None = None) -> InjectionOperator:
    """Precompute the injection; ``lam = 0`` gives the zero operator (used in tests)."""
    return InjectionOperator(lam, ell, sensing, proj, space, n_modes)


def apply(op: InjectionOperator, residual: np.ndarray) -> np.ndarray:
    return op.apply(residual)


@dataclass(frozen=True)
class NormReport:
    lam: float
    ell: float
    norm: float  # |I|_{L(R^S, H)}
    c_tilde: float  # |A^{-1} P_W A^ell P_aux|_{L(H)}, computed
    norm_lift: float  # |Z|_{L(R^S, H)}
    bound: float  # lam * c_tilde * |Z|
    c_tilde_factors: dict
    c_tilde_factor_bound: float
    within_bound: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _max_sym_eig(A, B=None) -> float:
    A = 0.5 * (A + A.T)
    if B is None:
        return float(np.linalg.eigvalsh(A)[-1])
    B = 0.5 * (B + B.T)
    return float(sla.eigh(A, B, eigvals_only=True)[-1])


def _aux_power_norm(op: InjectionOperator) -> float:
    """``sup |A^ell q|_H / |q|_H`` over the auxiliary span."""
    space, W = op.space, op.proj.aux.members
    gram_h = op.proj.aux.gram_h
    if op.ell in (0.0, 1.0, 2.0):
        AW = W
        for _ in range(int(op.ell)):
            AW = space.apply_A(AW)
        num = AW.T @ (space.mass @ AW)
    else:
        pairs = eigenpairs(space, min(space.n_dofs, 400))
        E = np.column_stack([p.vector for p in pairs])
        alpha = np.array([p.value for p in pairs])
        C = E.T @ (space.mass @ W)
        num = (C * alpha[:, None] ** (2 * op.ell)).T @ C
    return math.sqrt(max(_max_sym_eig(num, gram_h), 0.0))


def operator_norm_report(op: InjectionOperator) -> NormReport:
    """Computed norm of the injection against the factored bound ``lam C |Z|``.

    ``C`` is evaluated exactly on the discrete space, and separately bounded
    by the product ``|A^{-1}|_{L(H)} |P_W|_{L(H)} |A^ell|_{L(aux, H)}
    |P_aux|_{L(H)}``.  Discretely ``|A^{-1}|_{L(H)} = 1 / alpha_1`` which
    deviates from the continuum value 1 only for Dirichlet conditions; both
    are reported.
    """
    space = op.space
    M = space.mass
    V = op.sensing.vandermonde
    K = op.matrix
    # |I|^2 = max eig of K' M K over the Euclidean metric
    norm = math.sqrt(max(_max_sym_eig(K.T @ (M @ K)), 0.0))
    # the composite maps z to F C B z; its L(H) norm uses (FC)' M (FC) against V^{-1}
    FC = op.lifted_sensors @ op.coefficient_map
    c_tilde = math.sqrt(max(_max_sym_eig(FC.T @ (M @ FC), np.linalg.inv(V)), 0.0))
    norm_lift = math.sqrt(float(np.max(1.0 / np.linalg.eigvalsh(V))))
    proj = op.proj
    p_aux = proj.norm_onto_aux
    p_sens = _projector_h_norm(space, op.sensing.indicator_fields, proj.aux.members, proj.cross_gram.T)
    inv_a = 1.0 / eigenpairs(space, 1)[0].value
    a_ell = _aux_power_norm(op)
    factors = {
        "inv_A_H": inv_a,
        "P_sensors_H": p_sens,
        "A_ell_on_aux_H": a_ell,
        "P_aux_H": p_aux,
        "continuum_embedding_constants": 1.0,
    }
    factor_bound = inv_a * p_sens * a_ell * p_aux
    bound = op.lam * c_tilde * norm_lift
    tol = 1e-9 * max(bound, 1e-300)
    ok = norm <= bound + tol and c_tilde <= factor_bound * (1 + 1e-9)
    return NormReport(
        lam=op.lam, ell=op.ell, norm=norm, c_tilde=c_tilde, norm_lift=norm_lift, bound=bound,
        c_tilde_factors=factors, c_tilde_factor_bound=factor_bound, within_bound=bool(ok),
    )


def injected_energy_check(times, injection_norms_h, lam: float, rho: float, mu: float,
                          c_tilde: float, z0_norm_h: float) -> dict:
    """Compare ``|I(Z z)|_{L^2((0,T), H)}`` with ``lam rho (2 mu)^{-1/2} C |z0|_H``.

    ``rho`` and ``mu`` should describe the decay of ``|z|_H``.  The time
    integral uses the trapezoidal rule on the recorded series.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(injection_norms_h, dtype=float)
    energy = math.sqrt(float(np.trapezoid(g ** 2, t)))
    bound = lam * rho * c_tilde * z0_norm_h / math.sqrt(2 * mu) if mu > 0 else math.inf
    return {"energy": energy, "bound": bound, "ok": bool(energy <= bound)}
