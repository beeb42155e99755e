"""
High-order multigroup Sn transport: upwind DG sweep with backward-Euler
pseudo-absorption, zero-and-scale fixup, and the moments and closures the
low-order system needs.

Intensities are stored as one array I[d, g, dof] with directions sorted by
mu ascending. In slab form sum(w) = 2, the isotropic emission source is
sigma_g B_g / 2 and E_g = (1/c) sum_d w_d I_{d,g}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .fem1d import Mesh1D
from .opacity import MultigroupOpacity
from .quadrature import AngularQuadrature
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants, group_emission

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class AngularIntensity:
    """Nodal DG intensities, shape (n_directions, n_groups, n_dof)."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("angular intensity must be a (directions, groups, dofs) array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("angular intensity must be finite")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    def copy(self) -> "AngularIntensity":
        return AngularIntensity(self.values.copy())

    @classmethod
    def isotropic(cls, emission: np.ndarray, n_directions: int) -> "AngularIntensity":
        """I = B_g/2 in every direction, from nodal group emission of shape (n_dof, G)."""
        base = 0.5 * np.asarray(emission, dtype=float).T
        return cls(np.repeat(base[None, :, :], n_directions, axis=0))


@dataclass(frozen=True)
class BoundaryData:
    """Prescribed blackbody temperatures at x_left and x_right."""
    T_left: float
    T_right: float

    def __post_init__(self):
        if not (self.T_left > 0.0 and self.T_right > 0.0):
            raise ValueError("boundary temperatures must be positive")

    def inflow(self, groups: GroupStructure,
               constants: SpectralConstants = DEFAULT_CONSTANTS) -> Tuple[np.ndarray, np.ndarray]:
        """Incoming intensity B_g(T_bdr)/2 per group on the left and right faces."""
        left = 0.5 * group_emission(self.T_left, groups, constants)
        right = 0.5 * group_emission(self.T_right, groups, constants)
        return left, right


@dataclass(frozen=True)
class InflowMoments:
    """Incoming partial current (negative) and pressure at each boundary.

    F_in = sum_{mu n < 0} w mu n I_in and P_in = (1/c) sum_{mu n < 0} w mu^2 I_in,
    summed over groups.
    """
    F_in_left: float
    F_in_right: float
    P_in_left: float
    P_in_right: float


@dataclass(frozen=True)
class FixupStats:
    """Elements touched by the fixup and the energy (erg/cm^2) it added."""
    count: int
    defect: float


def inflow_moments(bdry: BoundaryData, quad: AngularQuadrature, groups: GroupStructure,
                   constants: SpectralConstants = DEFAULT_CONSTANTS) -> InflowMoments:
    left, right = bdry.inflow(groups, constants)
    into_left = quad.mu > 0.0
    into_right = quad.mu < 0.0
    mu, w = quad.mu, quad.w
    return InflowMoments(
        F_in_left=float(np.sum(w[into_left] * -mu[into_left]) * left.sum()),
        F_in_right=float(np.sum(w[into_right] * mu[into_right]) * right.sum()),
        P_in_left=float(np.sum(w[into_left] * mu[into_left] ** 2) * left.sum() / constants.c),
        P_in_right=float(np.sum(w[into_right] * mu[into_right] ** 2) * right.sum() / constants.c),
    )


def _check_geometry(mesh: Mesh1D, sigma_tilde: np.ndarray) -> None:
    if np.any(mesh.h <= 0.0):
        raise ValueError("degenerate element in sweep")
    if np.any(sigma_tilde < 0.0) or not np.all(np.isfinite(sigma_tilde)):
        raise ValueError("total opacity must be finite and nonnegative")


def sweep_source(source: np.ndarray, sigma_tilde: np.ndarray, inflow_left: np.ndarray,
                 inflow_right: np.ndarray, quad: AngularQuadrature, mesh: Mesh1D) -> np.ndarray:
    """Invert streaming plus removal for a given nodal source.

    ``source`` has shape (n_dir, G, n_dof), ``sigma_tilde`` (n_elements, G) and
    the inflow arrays shape (G,). Each element solves

        [ |mu|/2 + s h/2      mu/2        ] [I_L]   [h/2 q_L + |mu| I_in (mu > 0)]
        [     -mu/2      |mu|/2 + s h/2   ] [I_R] = [h/2 q_R + |mu| I_in (mu < 0)]

    marching with the flow, so the outflow trace of one element is the
    inflow of the next. The result is linear in (source, inflow).
    """
    _check_geometry(mesh, sigma_tilde)
    n_dir, G, n_dof = source.shape
    Ne = mesh.n_elements
    mu = quad.mu[:, None, None]
    amu = np.abs(mu)
    half_h = 0.5 * mesh.h
    p = 0.5 * amu + (sigma_tilde * half_h[:, None]).T[None, :, :]      # (d, G, Ne)
    det = p**2 + 0.25 * mu**2
    q = source.reshape(n_dir, G, Ne, 2)
    s1 = half_h * q[..., 0]
    s2 = half_h * q[..., 1]

    out = np.empty((n_dir, G, Ne, 2))
    for sign in (1, -1):
        sel = quad.mu > 0.0 if sign > 0 else quad.mu < 0.0
        if not np.any(sel):
            continue
        m = mu[sel]
        am = amu[sel]
        pp, dd, a1, a2 = p[sel], det[sel], s1[sel], s2[sel]
        if sign > 0:
            # inflow enters the left row; recurrence carries I_R
            out_base = (pp * a2 + 0.5 * m * a1) / dd
            out_gain = 0.5 * m * am / dd
            other_base = (pp * a1 - 0.5 * m * a2) / dd
            other_gain = pp * am / dd
            inflow = np.broadcast_to(inflow_left, (m.shape[0], G)).copy()
            order = range(Ne)
        else:
            # inflow enters the right row; recurrence carries I_L
            out_base = (pp * a1 - 0.5 * m * a2) / dd
            out_gain = -0.5 * m * am / dd
            other_base = (pp * a2 + 0.5 * m * a1) / dd
            other_gain = pp * am / dd
            inflow = np.broadcast_to(inflow_right, (m.shape[0], G)).copy()
            order = range(Ne - 1, -1, -1)

        incoming = np.empty_like(out_base)
        for e in order:
            incoming[..., e] = inflow
            inflow = out_base[..., e] + out_gain[..., e] * inflow
        outflow = out_base + out_gain * incoming
        other = other_base + other_gain * incoming
        if sign > 0:
            out[sel, :, :, 0] = other
            out[sel, :, :, 1] = outflow
        else:
            out[sel, :, :, 0] = outflow
            out[sel, :, :, 1] = other
    return out.reshape(n_dir, G, n_dof)


def sweep(emission_T: np.ndarray, I_prev: AngularIntensity, sigma: MultigroupOpacity, dt: float,
          bdry: BoundaryData, quad: AngularQuadrature, mesh: Mesh1D, groups: GroupStructure,
          constants: SpectralConstants = DEFAULT_CONSTANTS) -> AngularIntensity:
    """One transport sweep of every (direction, group) pair for one backward-Euler step."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    emission_T = np.asarray(emission_T, dtype=float)
    if emission_T.shape != (mesh.n_dof,) or np.any(emission_T <= 0.0):
        raise ValueError("emission temperature must be positive at every dof")
    inv_cdt = 1.0 / (constants.c * dt)
    sigma_dof = sigma.at_dofs(mesh)                                   # (n_dof, G)
    emission = 0.5 * sigma_dof * group_emission(emission_T, groups, constants)
    source = emission.T[None, :, :] + inv_cdt * I_prev.values
    left, right = bdry.inflow(groups, constants)
    values = sweep_source(source, sigma.sigma + inv_cdt, left, right, quad, mesh)
    return AngularIntensity(values)


def fixup_zero_and_scale(I: AngularIntensity, mesh: Mesh1D, quad: AngularQuadrature,
                         constants: SpectralConstants = DEFAULT_CONSTANTS) -> Tuple[AngularIntensity, FixupStats]:
    """Zero negative nodal values while keeping each element average.

    Elements with nonpositive average are set to zero entirely; the energy
    this adds is the recorded defect.
    """
    n_dir, G, n_dof = I.shape
    pairs = I.values.reshape(n_dir, G, mesh.n_elements, 2)
    negative = np.any(pairs < 0.0, axis=-1)
    if not np.any(negative):
        return I, FixupStats(0, 0.0)

    avg = pairs.mean(axis=-1)
    fixed = pairs.copy()
    vanish = negative & (avg <= 0.0)
    rescale = negative & ~vanish
    fixed[vanish] = 0.0
    left_neg = rescale & (pairs[..., 0] < 0.0)
    right_neg = rescale & (pairs[..., 1] < 0.0)
    fixed[left_neg, 0] = 0.0
    fixed[left_neg, 1] = 2.0 * avg[left_neg]
    fixed[right_neg, 1] = 0.0
    fixed[right_neg, 0] = 2.0 * avg[right_neg]

    weight = quad.w[:, None, None] / constants.c * mesh.h[None, None, :]
    defect = float(np.sum(np.where(vanish, -avg, 0.0) * weight))
    count = int(np.count_nonzero(negative))
    logger.debug("fixup touched %d element intensities, defect %.3e", count, defect)
    return AngularIntensity(fixed.reshape(n_dir, G, n_dof)), FixupStats(count, defect)


@dataclass(eq=False)
class HOMoments:
    """Moments and closures of an angular intensity, all per dof.

    E_g, F_g have shape (G, n_dof); the gray quantities shape (n_dof,).
    ``P_plus``/``P_minus`` are the pressures over mu > 0 / mu < 0 (divided by
    c) and ``J_plus``/``J_minus`` the matching partial currents sum w mu I.
    ``beta`` is sum w (|mu| - alpha) I.
    """
    E_g: np.ndarray
    F_g: np.ndarray
    E: np.ndarray
    F: np.ndarray
    Tclo: np.ndarray
    beta: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    J_plus: np.ndarray
    J_minus: np.ndarray
    alpha: float

    def outgoing(self, side: str) -> Tuple[float, float, float]:
        """(J_out, P_out, E) at a boundary: outgoing half-range current and pressure."""
        if side == "left":
            return float(-self.J_minus[0]), float(self.P_minus[0]), float(self.E[0])
        if side == "right":
            return float(self.J_plus[-1]), float(self.P_plus[-1]), float(self.E[-1])
        raise ValueError(f"unknown boundary side {side!r}")


def moments(I: AngularIntensity, quad: AngularQuadrature,
            constants: SpectralConstants = DEFAULT_CONSTANTS) -> HOMoments:
    """Group and gray moments, closures and half-range quantities."""
    v = I.values
    mu, w = quad.mu, quad.w
    a = quad.alpha
    E_g = np.einsum("d,dgn->gn", w / constants.c, v)
    F_g = np.einsum("d,dgn->gn", w * mu, v)
    gray = v.sum(axis=1)                                                # (d, n)
    pos = mu > 0.0
    neg = mu < 0.0
    return HOMoments(
        E_g=E_g,
        F_g=F_g,
        E=E_g.sum(axis=0),
        F=F_g.sum(axis=0),
        Tclo=np.einsum("d,dn->n", w * (mu**2 - 1.0 / 3.0), gray),
        beta=np.einsum("d,dn->n", w * (np.abs(mu) - a), gray),
        P_plus=np.einsum("d,dn->n", w[pos] * mu[pos] ** 2, gray[pos]) / constants.c,
        P_minus=np.einsum("d,dn->n", w[neg] * mu[neg] ** 2, gray[neg]) / constants.c,
        J_plus=np.einsum("d,dn->n", w[pos] * mu[pos], gray[pos]),
        J_minus=np.einsum("d,dn->n", w[neg] * mu[neg], gray[neg]),
        alpha=a,
    )
