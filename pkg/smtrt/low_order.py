"""
Gray LDG low-order system of the Second-Moment method.

Unknowns are the Y1 coefficients of E and F. With lumped forms the system is

    M_F F - (c/3) D^T E          = q_F + r1
    D F + (M_E + P) E - B(T)     = q_E + r0

where D collects the upwinded flux trace F_hat = avg F + (s/2)[F] and the
volume term -(u', F); the first-moment trace E_hat = avg E - (s/2)[E] makes
the E-coupling of the first row exactly -(c/3) D^T. P holds the c*alpha/2
interior penalty and the c*alpha boundary term.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sps

from .errors import NumericalError
from .fem1d import DGField, Mesh1D, jump_avg
from .opacity import GrayOpacityFields, MultigroupOpacity
from .quadrature import AngularQuadrature
from .spectral import DEFAULT_CONSTANTS, SpectralConstants
from .transport import HOMoments, InflowMoments

logger = logging.getLogger(__name__)

Mode = Literal["consistent", "independent"]


def divergence_matrix(mesh: Mesh1D, upwind_sign: int = 1) -> sps.csr_matrix:
    """D[u, F]: sum over faces [u] F_hat minus the volume term (u', F)."""
    if upwind_sign not in (1, -1):
        raise ValueError("upwind sign must be +1 or -1")
    Ne, n = mesh.n_elements, mesh.n_dof
    L = 2 * np.arange(Ne)
    R = L + 1
    rows = [L, L, R, R]
    cols = [L, R, L, R]
    vals = [np.full(Ne, 0.5), np.full(Ne, 0.5), np.full(Ne, -0.5), np.full(Ne, -0.5)]

    i1, i2 = mesh.face_dofs
    th1 = 0.5 * (1.0 + upwind_sign)
    th2 = 0.5 * (1.0 - upwind_sign)
    nf = i1.size
    rows += [i1, i1, i2, i2]
    cols += [i1, i2, i1, i2]
    vals += [np.full(nf, th1), np.full(nf, th2), np.full(nf, -th1), np.full(nf, -th2)]
    return sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()


def penalty_matrix(mesh: Mesh1D, c: float, alpha: float) -> sps.csr_matrix:
    """(c alpha / 2) [u][E] on interior faces plus c alpha u E on the boundary."""
    n = mesh.n_dof
    i1, i2 = mesh.face_dofs
    k = 0.5 * c * alpha
    nf = i1.size
    rows = np.concatenate([i1, i1, i2, i2, [0, n - 1]])
    cols = np.concatenate([i1, i2, i1, i2, [0, n - 1]])
    vals = np.concatenate([np.full(nf, k), np.full(nf, -k), np.full(nf, -k), np.full(nf, k),
                           [c * alpha, c * alpha]])
    return sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@dataclass(eq=False)
class LowOrderSystem:
    """Assembled base blocks for one outer iteration (gray opacities frozen)."""
    mesh: Mesh1D
    D: sps.csr_matrix
    P: sps.csr_matrix
    M_F: np.ndarray
    M_E: np.ndarray
    weights: np.ndarray
    q_E: np.ndarray
    q_F: np.ndarray
    c: float
    dt: float
    mode: str
    upwind_sign: int

    def schur_base(self) -> sps.csr_matrix:
        """(c/3) D M_F^-1 D^T + M_E + P."""
        DM = self.D @ sps.diags(1.0 / self.M_F)
        return ((self.c / 3.0) * (DM @ self.D.T) + sps.diags(self.M_E) + self.P).tocsr()

    def eliminate_flux_rhs(self, q_F: np.ndarray) -> np.ndarray:
        """D M_F^-1 q_F, the flux row folded into the energy row."""
        return self.D @ (q_F / self.M_F)

    def back_substitute(self, E: np.ndarray, q_F: np.ndarray) -> np.ndarray:
        """F = M_F^-1 (q_F + (c/3) D^T E), element-local because M_F is diagonal."""
        return (q_F + (self.c / 3.0) * (self.D.T @ E)) / self.M_F


def assemble_base(gray: GrayOpacityFields, dt: float, quad: AngularQuadrature, mesh: Mesh1D,
                  inflow: InflowMoments, E_star: np.ndarray, F_star: np.ndarray,
                  mode: Mode = "consistent", upwind_sign: int = 1,
                  constants: SpectralConstants = DEFAULT_CONSTANTS) -> LowOrderSystem:
    """Assemble the blocks and base right-hand sides for the given time-edge state."""
    if mode not in ("consistent", "independent"):
        raise ValueError(f"unknown low-order mode {mode!r}")
    if np.any(mesh.h <= 0.0):
        raise NumericalError("degenerate element in low-order assembly")
    c = constants.c
    w = mesh.lumped_weights
    sigma_F = gray.tilde_F(dt, constants)
    sigma_E = gray.tilde_E(dt, constants)
    if np.any(sigma_F <= 0.0) or np.any(sigma_E <= 0.0):
        raise NumericalError("flux mass is singular: no absorption and no time term")
    M_F = mesh.lumped_diagonal(sigma_F)
    M_E = mesh.lumped_diagonal(c * sigma_E)

    q_E = w * np.asarray(E_star, dtype=float) / dt
    q_E[0] -= 2.0 * inflow.F_in_left
    q_E[-1] -= 2.0 * inflow.F_in_right
    q_F = w * np.asarray(F_star, dtype=float) / (c * dt)
    if mode == "consistent":
        # -c (v n) P_in with n = -1 on the left and +1 on the right
        q_F[0] += c * inflow.P_in_left
        q_F[-1] -= c * inflow.P_in_right

    return LowOrderSystem(
        mesh=mesh,
        D=divergence_matrix(mesh, upwind_sign),
        P=penalty_matrix(mesh, c, quad.alpha),
        M_F=M_F,
        M_E=M_E,
        weights=w,
        q_E=q_E,
        q_F=q_F,
        c=c,
        dt=dt,
        mode=mode,
        upwind_sign=upwind_sign,
    )




@dataclass(eq=False)
class CorrectionSources:
    """Right-hand-side functionals r0 (energy row) and r1 (flux row), per dof.

    ``absorbed`` is the part of r0 taken over from the low-order residual of
    the transport moments (see ``absorb_residual``); it is a volume source,
    not a boundary term.
    """
    r0: np.ndarray
    r1: np.ndarray
    mode: str
    absorbed: Optional[np.ndarray] = None

    @classmethod
    def zero(cls, n_dof: int, mode: str = "independent") -> "CorrectionSources":
        return cls(np.zeros(n_dof), np.zeros(n_dof), mode)

    @property
    def absorbed_energy(self) -> float:
        return 0.0 if self.absorbed is None else float(np.sum(self.absorbed))


def _multigroup_term(mom: HOMoments, gray: GrayOpacityFields, sigma: MultigroupOpacity,
                     mesh: Mesh1D) -> np.ndarray:
    """(v, sum_g (sigma_F - sigma_g) F_g), lumped."""
    sigma_dof = sigma.at_dofs(mesh)
    diff = gray.sigma_F[:, None] - sigma_dof
    return mesh.lumped_weights * np.sum(diff * mom.F_g.T, axis=1)


def _scatter_faces(out: np.ndarray, mesh: Mesh1D, face: np.ndarray) -> None:
    """Add ``face`` times the jump of the test function, [v] = v1 - v2."""
    i1, i2 = mesh.face_dofs
    out[i1] += face
    out[i2] -= face


def _closure_terms(mom: HOMoments, mesh: Mesh1D) -> np.ndarray:
    """(v', T) - sum_faces [v] avg(T)."""
    r1 = np.zeros(mesh.n_dof)
    T = mom.Tclo
    half = 0.5 * (T[0::2] + T[1::2])
    r1[0::2] -= half
    r1[1::2] += half
    _scatter_faces(r1, mesh, -jump_avg(DGField(mesh, T)).avg)
    return r1


def assemble_consistent(mom: HOMoments, gray: GrayOpacityFields, sigma: MultigroupOpacity,
                        inflow: InflowMoments, mesh: Mesh1D, upwind_sign: int = 1,
                        constants: SpectralConstants = DEFAULT_CONSTANTS) -> CorrectionSources:
    """Corrections that make the converged low-order moments equal the transport moments."""
    c = constants.c
    s = float(upwind_sign)
    ca = c * mom.alpha

    def jump(values: np.ndarray) -> np.ndarray:
        return jump_avg(DGField(mesh, values)).jump

    r0 = np.zeros(mesh.n_dof)
    _scatter_faces(r0, mesh, -0.5 * jump(mom.beta) + 0.5 * s * jump(mom.F))
    J_out, _, E_b = mom.outgoing("left")
    r0[0] -= J_out - ca * E_b - inflow.F_in_left
    J_out, _, E_b = mom.outgoing("right")
    r0[-1] -= J_out - ca * E_b - inflow.F_in_right

    r1 = _multigroup_term(mom, gray, sigma, mesh) + _closure_terms(mom, mesh)
    odd = mom.P_plus - mom.P_minus
    _scatter_faces(r1, mesh, -0.5 * c * (jump(odd) + (s / 3.0) * jump(mom.E)))
    _, P_out, E_b = mom.outgoing("left")
    r1[0] += c * (P_out - E_b / 3.0)
    _, P_out, E_b = mom.outgoing("right")
    r1[-1] -= c * (P_out - E_b / 3.0)
    return CorrectionSources(r0, r1, "consistent")


def assemble_independent(mom: HOMoments, gray: GrayOpacityFields, sigma: MultigroupOpacity,
                         mesh: Mesh1D) -> CorrectionSources:
    """Closures on the first moment only; r0 vanishes identically."""
    r1 = _multigroup_term(mom, gray, sigma, mesh) + _closure_terms(mom, mesh)
    return CorrectionSources(np.zeros(mesh.n_dof), r1, "independent")


def assemble_corrections(mode: Mode, mom: HOMoments, gray: GrayOpacityFields, sigma: MultigroupOpacity,
                         inflow: InflowMoments, mesh: Mesh1D, upwind_sign: int = 1,
                         constants: SpectralConstants = DEFAULT_CONSTANTS) -> CorrectionSources:
    if mode == "consistent":
        return assemble_consistent(mom, gray, sigma, inflow, mesh, upwind_sign, constants)
    return assemble_independent(mom, gray, sigma, mesh)


def low_order_residual(sys: LowOrderSystem, corr: CorrectionSources, E: np.ndarray, F: np.ndarray,
                       emission: np.ndarray) -> tuple:
    """Residuals of both rows for given E, F and lumped emission vector B(T)."""
    res_F = sys.M_F * F - (sys.c / 3.0) * (sys.D.T @ E) - sys.q_F - corr.r1
    res_E = sys.D @ F + sys.M_E * E + sys.P @ E - emission - sys.q_E - corr.r0
    return res_E, res_F


def absorb_residual(sys: LowOrderSystem, corr: CorrectionSources, E: np.ndarray, F: np.ndarray,
                    emission: np.ndarray) -> CorrectionSources:
    """Fold the residual of the transport moments into the corrections.

    The consistent corrections reproduce the discrete transport moments only
    when those moments solve the transport discretization exactly. The
    positivity fixup and the fallbacks of the gray collapse break that, and
    the residual left at (E, F, emission) is exactly their footprint. Adding
    it to r0 and r1 makes (E, F) solve the corrected system at the sweep's
    emission.
    """
    res_E, res_F = low_order_residual(sys, corr, E, F, emission)
    scale = float(np.max(np.abs(sys.q_E))) or 1.0
    if np.max(np.abs(res_E)) > 1e-8 * scale:
        logger.debug("absorbing low-order residual %.3e (relative)", np.max(np.abs(res_E)) / scale)
    absorbed = res_E if corr.absorbed is None else corr.absorbed + res_E
    return CorrectionSources(corr.r0 + res_E, corr.r1 + res_F, corr.mode, absorbed)


def boundary_leakage(sys: LowOrderSystem, corr: Optional[CorrectionSources], E: np.ndarray,
                     inflow: InflowMoments, alpha: float) -> float:
    """Net outflow rate through both faces implied by the energy row."""
    ca = sys.c * alpha
    leak = ca * (E[0] + E[-1]) + 2.0 * (inflow.F_in_left + inflow.F_in_right)
    if corr is not None:
        r0 = corr.r0 if corr.absorbed is None else corr.r0 - corr.absorbed
        # end dofs carry no face terms, so this is the boundary part of r0
        leak -= float(r0[0] + r0[-1])
    return float(leak)
