"""
Newton-Schur solve of the gray low-order system with pointwise temperature
elimination.

Each Newton step linearizes the emission about the current temperature T0,
eliminates F (M_F is diagonal) and the linearized material row, solves the
SPD Schur system for E, back-substitutes F and then solves the material
balance

    (C_v/dt) T + sigma_P a c T^4 = c sigma_E E + (C_v/dt) T*

node by node, which keeps T positive whenever the right side is.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .errors import ConvergenceError, NumericalError
from .low_order import CorrectionSources, LowOrderSystem
from .spectral import DEFAULT_CONSTANTS, SpectralConstants, planck_dT

logger = logging.getLogger(__name__)

ROUND_OFF_CHANGE = 1e-13
DEFAULT_FLOOR = 1e-8
# changes below this multiple of the linear and elimination tolerances are solver noise
NOISE_FACTOR = 100.0


@dataclass(eq=False)
class EmissionOperators:
    """Lumped emission operators B, B~ and their linearizations, per dof."""
    sigma_P: np.ndarray
    sigma_E: np.ndarray
    cv: np.ndarray
    dt: float
    weights: np.ndarray
    constants: SpectralConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.cv = np.broadcast_to(np.asarray(self.cv, dtype=float), self.weights.shape).copy()
        if np.any(self.cv <= 0.0):
            raise ValueError("heat capacity must be positive")
        if np.any(self.sigma_P < 0.0) or np.any(self.sigma_E < 0.0):
            raise ValueError("gray opacities must be nonnegative")

    @property
    def kappa(self) -> np.ndarray:
        """C_v / dt"""
        return self.cv / self.dt

    @property
    def emissivity(self) -> np.ndarray:
        """sigma_P a c, the T^4 coefficient."""
        return self.sigma_P * self.constants.a * self.constants.c

    @property
    def M_a(self) -> np.ndarray:
        return self.weights * self.constants.c * self.sigma_E

    def B(self, T: np.ndarray) -> np.ndarray:
        return self.weights * self.emissivity * T**4

    def Btilde(self, T: np.ndarray) -> np.ndarray:
        return self.weights * (self.kappa * T + self.emissivity * T**4)

    def dB(self, T0: np.ndarray) -> np.ndarray:
        return self.weights * self.sigma_P * planck_dT(T0, self.constants)

    def dBtilde(self, T0: np.ndarray) -> np.ndarray:
        return self.weights * self.kappa + self.dB(T0)

    def q_T(self, T_star: np.ndarray) -> np.ndarray:
        return self.weights * self.kappa * T_star

    def coupling(self, T0: np.ndarray) -> np.ndarray:
        """4 sigma_P a c T0^3 / (C_v/dt + 4 sigma_P a c T0^3), in [0, 1)."""
        slope = self.sigma_P * planck_dT(np.asarray(T0, dtype=float), self.constants)
        return slope / (self.kappa + slope)


@dataclass(eq=False)
class SchurSystem:
    """S E = rhs after eliminating F and the linearized material row."""
    S: sps.csr_matrix
    rhs: np.ndarray
    M_a: np.ndarray
    coupling: np.ndarray


def build_schur(sys: LowOrderSystem, em: EmissionOperators, T0: np.ndarray,
                q_E: np.ndarray, q_F: np.ndarray, q_T: np.ndarray) -> SchurSystem:
    """Schur complement and right side at the linearization point T0."""
    k = em.coupling(T0)
    M_a = em.M_a
    S = (sys.schur_base() - sps.diags(k * M_a)).tocsr()
    rhs = q_E - sys.eliminate_flux_rhs(q_F) + em.B(T0) + k * (q_T - em.Btilde(T0))
    return SchurSystem(S=S, rhs=rhs, M_a=M_a, coupling=k)


def pcg_solve(S, rhs: np.ndarray, tol: float = 1e-10, x0: Optional[np.ndarray] = None,
              max_iter: Optional[int] = None, precondition: bool = True) -> Tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradient; returns (x, iterations).

    Stops when ||b - S x|| <= tol ||b||. A warm start that already meets the
    tolerance returns after zero iterations.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros(n), 0
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - S @ x
    if np.linalg.norm(r) <= tol * norm_b:
        return x, 0

    inv_diag = None
    if precondition:
        diag = S.diagonal() if sps.issparse(S) else np.diag(S)
        if np.any(diag <= 0.0):
            raise NumericalError("Schur matrix has a nonpositive diagonal entry")
        inv_diag = 1.0 / diag
    z = r * inv_diag if inv_diag is not None else r.copy()
    p = z.copy()
    gamma = r @ z
    for it in range(1, max_iter + 1):
        Sp = S @ p
        curvature = p @ Sp
        if not curvature > 0.0:
            raise NumericalError(f"nonpositive curvature {curvature:.3e} in CG: matrix is not SPD")
        step = gamma / curvature
        x += step * p
        r -= step * Sp
        if np.linalg.norm(r) <= tol * norm_b:
            return x, it
        z = r * inv_diag if inv_diag is not None else r
        gamma_old = gamma
        gamma = r @ z
        p = z + (gamma / gamma_old) * p
    raise ConvergenceError(f"CG did not reach {tol:.1e} in {max_iter} iterations")


def _upper_band(S) -> Tuple[np.ndarray, int]:
    upper = sps.triu(sps.csr_matrix(S)).tocoo()
    width = int(np.max(upper.col - upper.row)) if upper.nnz else 0
    ab = np.zeros((width + 1, S.shape[0]))
    ab[width + upper.row - upper.col, upper.col] = upper.data
    return ab, width


def banded_solve(S, rhs: np.ndarray, **_ignored) -> Tuple[np.ndarray, int]:
    """Direct Cholesky solve in symmetric banded storage; same return shape as pcg_solve."""
    ab, _ = _upper_band(S)
    try:
        return sla.solveh_banded(ab, np.asarray(rhs, dtype=float)), 0
    except sla.LinAlgError as exc:
        raise NumericalError(f"banded Cholesky failed: {exc}") from exc


LINEAR_SOLVERS = {"pcg": pcg_solve, "banded": banded_solve}


def solve_material_balance(kappa: np.ndarray, emissivity: np.ndarray, rhs: np.ndarray,
                           T_guess: Optional[np.ndarray] = None, tol: float = 1e-10,
                           floor: float = DEFAULT_FLOOR, max_iter: int = 200) -> Tuple[np.ndarray, int]:
    """Root of kappa T + emissivity T^4 = rhs per node by safeguarded Newton.

    Returns (T, number of floored nodes). Nodes with rhs <= 0 have no
    positive root and are set to ``floor``.
    """
    kappa = np.asarray(kappa, dtype=float)
    s = np.broadcast_to(np.asarray(emissivity, dtype=float), kappa.shape)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), kappa.shape)
    if np.any(kappa <= 0.0) or np.any(s < 0.0):
        raise ValueError("material balance needs kappa > 0 and emissivity >= 0")
    if not np.all(np.isfinite(rhs)):
        raise NumericalError("nonfinite right side in temperature elimination")

    T = np.full(kappa.shape, float(floor))
    positive = rhs > 0.0
    n_floored = int(np.count_nonzero(~positive))
    if not np.any(positive):
        return T, n_floored

    k, e, r = kappa[positive], s[positive], rhs[positive]
    lo = np.zeros_like(r)
    with np.errstate(divide="ignore"):
        hi = np.minimum(r / k, np.where(e > 0.0, (r / np.where(e > 0.0, e, 1.0)) ** 0.25, np.inf))
    x = 0.5 * (lo + hi)
    if T_guess is not None:
        guess = np.broadcast_to(np.asarray(T_guess, dtype=float), kappa.shape)[positive]
        inside = (guess > lo) & (guess < hi)
        x = np.where(inside, guess, x)

    for _ in range(max_iter):
        f = k * x + e * x**4 - r
        done = np.abs(f) <= tol * r
        if np.all(done):
            break
        hi = np.where(f > 0.0, x, hi)
        lo = np.where(f < 0.0, x, lo)
        newton = x - f / (k + 4.0 * e * x**3)
        safe = (newton > lo) & (newton < hi)
        x = np.where(done, x, np.where(safe, newton, 0.5 * (lo + hi)))
    else:
        raise ConvergenceError("temperature elimination did not converge")

    T[positive] = np.maximum(x, floor)
    return T, n_floored


def eliminate_temperature(E: np.ndarray, em: EmissionOperators, T_star: np.ndarray,
                          T_guess: Optional[np.ndarray] = None, tol: float = 1e-10,
                          floor: float = DEFAULT_FLOOR) -> Tuple[np.ndarray, int]:
    """Nodal T from (C_v/dt) T + sigma_P a c T^4 = c sigma_E E + (C_v/dt) T*."""
    rhs = em.constants.c * em.sigma_E * np.asarray(E, dtype=float) + em.kappa * np.asarray(T_star, dtype=float)
    T, n_floored = solve_material_balance(em.kappa, em.emissivity, rhs, T_guess, tol, floor)
    if n_floored:
        logger.warning("temperature floored to %.1e eV at %d nodes", floor, n_floored)
    return T, n_floored


def linear_temperature_update(E: np.ndarray, em: EmissionOperators, T0: np.ndarray, q_T: np.ndarray,
                              floor: float = DEFAULT_FLOOR) -> Tuple[np.ndarray, int]:
    """T = T0 + dB~^-1 (q_T - B~(T0) + M_a E), floored."""
    T = T0 + (q_T - em.Btilde(T0) + em.M_a * E) / em.dBtilde(T0)
    low = T < floor
    n_floored = int(np.count_nonzero(low))
    if n_floored:
        logger.warning("linearized temperature update floored at %d nodes", n_floored)
    return np.where(low, floor, T), n_floored


def relative_change(T_new: np.ndarray, T_old: np.ndarray, E_new: np.ndarray, E_old: np.ndarray) -> float:
    """Stacked relative changes of T and E.

    Each part is scaled by the larger of the two iterates' norms, so it stays
    within [0, 2] even when E grows by many orders of magnitude in one
    iteration (a cold slab hit by a hot boundary).
    """
    def part(new, old):
        scale = max(np.linalg.norm(new), np.linalg.norm(old))
        return np.linalg.norm(new - old) / scale if scale > 0.0 else 0.0
    return float(np.hypot(part(T_new, T_old), part(E_new, E_old)))


@dataclass(eq=False)
class NewtonResult:
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray
    iterations: int
    linear_iterations: List[int] = field(default_factory=list)
    changes: List[float] = field(default_factory=list)
    floored: int = 0


def newton_solve(sys: LowOrderSystem, corr: CorrectionSources, em: EmissionOperators,
                 E0: np.ndarray, F0: np.ndarray, T0: np.ndarray, T_star: np.ndarray,
                 tol: float = 1e-3, max_iter: int = 50, linear_tol: float = 1e-10,
                 elimination_tol: float = 1e-10, linear_solver: str = "pcg",
                 temperature_update: str = "nonlinear", floor: float = DEFAULT_FLOOR) -> NewtonResult:
    """Inner iteration with frozen gray opacities and corrections."""
    if linear_solver not in LINEAR_SOLVERS:
        raise ValueError(f"unknown linear solver {linear_solver!r}")
    if temperature_update not in ("nonlinear", "linear"):
        raise ValueError(f"unknown temperature update {temperature_update!r}")
    T0 = np.asarray(T0, dtype=float)
    if not np.all(np.isfinite(T0)) or np.any(T0 <= 0.0):
        raise ValueError("Newton start temperature must be positive and finite")
    solve = LINEAR_SOLVERS[linear_solver]

    q_E = sys.q_E + corr.r0
    q_F = sys.q_F + corr.r1
    q_T = em.q_T(np.asarray(T_star, dtype=float))
    E = np.array(E0, dtype=float)
    F = np.array(F0, dtype=float)
    T = T0.copy()
    result = NewtonResult(E, F, T, 0)
    first = None
    noise = max(NOISE_FACTOR * max(linear_tol, elimination_tol), ROUND_OFF_CHANGE)

    for it in range(1, max_iter + 1):
        schur = build_schur(sys, em, T, q_E, q_F, q_T)
        E_new, n_lin = solve(schur.S, schur.rhs, tol=linear_tol, x0=E)
        F_new = sys.back_substitute(E_new, q_F)
        if temperature_update == "nonlinear":
            T_new, n_floor = eliminate_temperature(E_new, em, T_star, T_guess=T,
                                                   tol=elimination_tol, floor=floor)
        else:
            T_new, n_floor = linear_temperature_update(E_new, em, T, q_T, floor)

        change = relative_change(T_new, T, E_new, E)
        logger.debug("newton %d: change %.3e, %d CG iterations", it, change, n_lin)
        result.linear_iterations.append(n_lin)
        result.changes.append(change)
        result.floored += n_floor
        E, F, T = E_new, F_new, T_new
        result.E, result.F, result.T, result.iterations = E, F, T, it
        if first is None:
            first = change
            if change <= noise:
                return result
            continue
        if change <= max(tol * first, noise):
            return result
        previous = result.changes[-2]
        if change >= previous and change <= tol * tol:
            logger.debug("newton stalled at change %.3e", change)
            return result
    raise ConvergenceError(f"Newton iteration did not converge in {max_iter} iterations")


@dataclass
class SpdReport:
    symmetry_defect: float
    lambda_min: float
    coupling_min: float
    coupling_max: float
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def spd_check(schur: SchurSystem, max_size: int = 128) -> SpdReport:
    """Dense symmetry and definiteness check of a small Schur matrix."""
    S = schur.S.toarray() if sps.issparse(schur.S) else np.asarray(schur.S)
    if S.shape[0] > max_size:
        raise ValueError(f"spd_check is a dense check; {S.shape[0]} unknowns exceed {max_size}")
    scale = np.max(np.abs(S)) or 1.0
    defect = float(np.max(np.abs(S - S.T)) / scale)
    lam = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
    k = np.asarray(schur.coupling, dtype=float)
    report = SpdReport(defect, lam, float(k.min()), float(k.max()))
    if defect > 1e-13:
        report.violations.append(f"symmetry defect {defect:.3e}")
    if not lam > 0.0:
        report.violations.append(f"smallest eigenvalue {lam:.3e}")
    bad = np.flatnonzero((k < 0.0) | (k >= 1.0))
    if bad.size:
        report.violations.append(f"coupling coefficient {k[bad[0]]:.6g} outside [0, 1) at dof {bad[0]}")
    return report
