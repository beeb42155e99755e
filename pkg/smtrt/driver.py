"""
Time stepping and the outer transport / low-order iteration.

``advance_sm`` runs the Second-Moment loop (sweep, gray collapse,
corrections, Newton-Schur solve) until the stacked relative change of
(T, E) has dropped by ``outer_tol``. ``advance_unaccelerated`` alternates
sweeps with pointwise temperature elimination. ``run`` marches a
``TimeSchedule`` and collects snapshots, probes and per-step reports.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .errors import ConvergenceError, SmtrtError
from .fem1d import DGField, Mesh1D
from .low_order import absorb_residual, assemble_base, assemble_corrections, boundary_leakage
from .nonlinear import (
    ROUND_OFF_CHANGE,
    EmissionOperators,
    newton_solve,
    relative_change,
    solve_material_balance,
)
from .opacity import MaterialModel, collapse_P, eval_multigroup, gray_opacities
from .quadrature import AngularQuadrature
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants, group_emission
from .transport import (
    AngularIntensity,
    BoundaryData,
    InflowMoments,
    fixup_zero_and_scale,
    inflow_moments,
    moments,
    sweep,
)

logger = logging.getLogger(__name__)

METHODS = ("consistent", "independent", "unaccelerated")
_ENERGY_SCALE_FLOOR = 1e-6


@dataclass
class SolverConfig:
    """Iteration controls for one run."""
    method: str = "consistent"
    outer_tol: float = 1e-3
    unacc_tol: float = 1e-4
    inner_tol: float = 1e-3
    linear_tol: float = 1e-10
    elimination_tol: float = 1e-10
    time_edge_source: str = "high_order"
    max_outer: int = 200
    max_outer_unaccelerated: int = 50_000
    max_inner: int = 50
    linear_solver: str = "pcg"
    temperature_update: str = "nonlinear"
    gray_opacity: str = "linear"
    upwind_sign: int = 1
    temperature_floor: float = 1e-8
    fixup: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        for name in ("outer_tol", "unacc_tol", "inner_tol", "linear_tol", "elimination_tol"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.time_edge_source not in ("high_order", "low_order"):
            raise ValueError(f"time_edge_source must be high_order or low_order, got {self.time_edge_source!r}")
        if min(self.max_outer, self.max_outer_unaccelerated, self.max_inner) < 1:
            raise ValueError("iteration limits must be positive")
        if self.upwind_sign not in (1, -1):
            raise ValueError("upwind_sign must be +1 or -1")
        if not self.temperature_floor > 0.0:
            raise ValueError("temperature_floor must be positive")


@dataclass(eq=False)
class SlabProblem:
    """A discretized problem: mesh, angular set, groups, materials and boundary data."""
    name: str
    mesh: Mesh1D
    quad: AngularQuadrature
    groups: GroupStructure
    materials: List[MaterialModel]
    boundary: BoundaryData
    T_initial: float
    t_final: float
    constants: SpectralConstants = DEFAULT_CONSTANTS
    _inflow: Optional[InflowMoments] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if int(self.mesh.material_ids.max()) >= len(self.materials):
            raise ValueError("mesh references a material id that is not defined")
        if not self.T_initial > 0.0:
            raise ValueError("initial temperature must be positive")
        if self.t_final < 0.0:
            raise ValueError("final time must be nonnegative")

    @property
    def cv(self) -> np.ndarray:
        """Heat capacity at every dof."""
        per_element = np.array([self.materials[m].cv for m in self.mesh.material_ids])
        return per_element[self.mesh.dof_element]

    @property
    def inflow(self) -> InflowMoments:
        if self._inflow is None:
            self._inflow = inflow_moments(self.boundary, self.quad, self.groups, self.constants)
        return self._inflow


@dataclass(eq=False)
class SimulationState:
    I: AngularIntensity
    E: DGField
    F: DGField
    T: DGField
    t: float = 0.0
    step: int = 0

    def copy(self) -> "SimulationState":
        return SimulationState(self.I.copy(), self.E.copy(), self.F.copy(), self.T.copy(), self.t, self.step)


def initial_state(problem: SlabProblem, T0: Optional[np.ndarray] = None) -> SimulationState:
    """Equilibrium radiation at the initial temperature with zero flux."""
    mesh = problem.mesh
    T = np.full(mesh.n_dof, problem.T_initial) if T0 is None else np.asarray(T0, dtype=float)
    emission = group_emission(T, problem.groups, problem.constants)
    I = AngularIntensity.isotropic(emission, problem.quad.n_directions)
    mom = moments(I, problem.quad, problem.constants)
    return SimulationState(I, DGField(mesh, mom.E), DGField(mesh, np.zeros(mesh.n_dof)), DGField(mesh, T))


@dataclass
class TimeStepReport:
    step: int
    t: float
    dt: float
    method: str
    sweeps: int = 0
    outer_iterations: int = 0
    newton_iterations: List[int] = field(default_factory=list)
    linear_iterations: List[int] = field(default_factory=list)
    changes: List[float] = field(default_factory=list)
    fixups: int = 0
    fixup_defect: float = 0.0
    floors: int = 0
    consistency_E: float = 0.0
    consistency_F: float = 0.0
    energy_defect: float = 0.0
    sweep_time: float = 0.0
    lo_time: float = 0.0
    converged: bool = False

    @property
    def avg_newton(self) -> float:
        return float(np.mean(self.newton_iterations)) if self.newton_iterations else 0.0

    @property
    def avg_linear(self) -> float:
        return float(np.mean(self.linear_iterations)) if self.linear_iterations else 0.0

    @property
    def wall_time(self) -> float:
        return self.sweep_time + self.lo_time

    def as_row(self, timings: bool = True) -> Dict[str, float]:
        row = {
            "step": self.step,
            "t": self.t,
            "dt": self.dt,
            "method": self.method,
            "sweeps": self.sweeps,
            "outer_iterations": self.outer_iterations,
            "avg_newton": self.avg_newton,
            "avg_linear": self.avg_linear,
            "fixups": self.fixups,
            "fixup_defect": self.fixup_defect,
            "floors": self.floors,
            "consistency_E": self.consistency_E,
            "consistency_F": self.consistency_F,
            "energy_defect": self.energy_defect,
            "converged": self.converged,
        }
        if timings:
            row["sweep_time"] = self.sweep_time
            row["lo_time"] = self.lo_time
        return row


def _norm_ratio(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(a)
    return float(np.linalg.norm(a - b) / scale) if scale > 0.0 else float(np.linalg.norm(b))


def _energy_defect(problem: SlabProblem, dE: float, dT_energy: float, leak: float,
                   E_star: np.ndarray, T_star: np.ndarray, dt: float) -> float:
    """|radiation change + material change + dt * leakage| over its own size."""
    w = problem.mesh.lumped_weights
    scale = abs(dE) + abs(dT_energy) + abs(dt * leak)
    content = float(np.sum(w * E_star) + np.sum(w * problem.cv * T_star))
    return abs(dE + dT_energy + dt * leak) / max(scale, _ENERGY_SCALE_FLOOR * content)


def _sweep(problem: SlabProblem, T_emit: np.ndarray, I_prev: AngularIntensity, sigma, dt: float,
           cfg: SolverConfig, report: TimeStepReport):
    start = time.perf_counter()
    I = sweep(T_emit, I_prev, sigma, dt, problem.boundary, problem.quad, problem.mesh,
              problem.groups, problem.constants)
    if cfg.fixup:
        I, stats = fixup_zero_and_scale(I, problem.mesh, problem.quad, problem.constants)
        if stats.count:
            logger.warning("step %d: fixup on %d element intensities", report.step, stats.count)
        report.fixups += stats.count
        report.fixup_defect += stats.defect
    report.sweeps += 1
    report.sweep_time += time.perf_counter() - start
    return I, moments(I, problem.quad, problem.constants)


def _collapse_temperature(T_it: np.ndarray, T_star: np.ndarray, floor: float) -> np.ndarray:
    """Spectral collapse temperature; floored nodes fall back to the previous step."""
    floored = T_it <= floor
    if not np.any(floored):
        return T_it
    return np.where(floored, T_star, T_it)


def _outer_converged(change: float, first: Optional[float], tol: float) -> bool:
    if first is None:
        return change <= ROUND_OFF_CHANGE
    return change <= tol * first or change <= ROUND_OFF_CHANGE


def advance_sm(problem: SlabProblem, state: SimulationState, dt: float,
               cfg: SolverConfig) -> Tuple[SimulationState, TimeStepReport]:
    """One backward-Euler step of the Second-Moment method."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if cfg.method == "unaccelerated":
        raise ValueError("advance_sm needs a consistent or independent method")
    mesh = problem.mesh
    report = TimeStepReport(step=state.step + 1, t=state.t + dt, dt=dt, method=cfg.method)
    T_star = state.T.values
    sigma = eval_multigroup(problem.materials, mesh, state.T.element_averages(), problem.groups)
    edge = moments(state.I, problem.quad, problem.constants)
    if cfg.time_edge_source == "high_order":
        E_star, F_star = edge.E, edge.F
    else:
        E_star, F_star = state.E.values, state.F.values

    E_it, F_it, T_it = state.E.values.copy(), state.F.values.copy(), T_star.copy()
    first: Optional[float] = None
    for m in range(1, cfg.max_outer + 1):
        I, mom = _sweep(problem, T_it, state.I, sigma, dt, cfg, report)

        start = time.perf_counter()
        T_gray = _collapse_temperature(T_it, T_star, cfg.temperature_floor)
        gray = gray_opacities(mom.E_g, T_gray, sigma, mesh, problem.groups, cfg.gray_opacity)
        sys = assemble_base(gray, dt, problem.quad, mesh, problem.inflow, E_star, F_star,
                            cfg.method, cfg.upwind_sign, problem.constants)
        corr = assemble_corrections(cfg.method, mom, gray, sigma, problem.inflow, mesh,
                                    cfg.upwind_sign, problem.constants)
        em = EmissionOperators(gray.sigma_P, gray.sigma_E, problem.cv, dt, mesh.lumped_weights,
                               problem.constants)
        if cfg.method == "consistent":
            # the residual is taken against the transport time edge
            ref = sys if cfg.time_edge_source == "high_order" else assemble_base(
                gray, dt, problem.quad, mesh, problem.inflow, edge.E, edge.F,
                cfg.method, cfg.upwind_sign, problem.constants)
            corr = absorb_residual(ref, corr, mom.E, mom.F, em.B(T_it))
        result = newton_solve(sys, corr, em, E_it, F_it, T_it, T_star,
                              tol=cfg.inner_tol, max_iter=cfg.max_inner, linear_tol=cfg.linear_tol,
                              elimination_tol=cfg.elimination_tol, linear_solver=cfg.linear_solver,
                              temperature_update=cfg.temperature_update, floor=cfg.temperature_floor)
        report.lo_time += time.perf_counter() - start

        change = relative_change(result.T, T_it, result.E, E_it)
        report.changes.append(change)
        report.newton_iterations.append(result.iterations)
        report.linear_iterations.extend(result.linear_iterations)
        report.floors += result.floored
        report.outer_iterations = m
        logger.debug("step %d outer %d: change %.3e, %d Newton", report.step, m, change, result.iterations)
        E_it, F_it, T_it = result.E, result.F, result.T

        if _outer_converged(change, first, cfg.outer_tol):
            report.converged = True
            break
        if first is None:
            first = change
    else:
        raise ConvergenceError(
            f"step {report.step}: outer iteration did not converge in {cfg.max_outer} iterations",
            report=report)

    report.consistency_E = _norm_ratio(E_it, mom.E)
    report.consistency_F = _norm_ratio(F_it, mom.F)
    w = mesh.lumped_weights
    leak = boundary_leakage(sys, corr, E_it, problem.inflow, problem.quad.alpha)
    # absorbed transport residual enters as a volume source
    leak -= corr.absorbed_energy
    report.energy_defect = _energy_defect(problem, float(np.sum(w * (E_it - E_star))),
                                          float(np.sum(w * problem.cv * (T_it - T_star))),
                                          leak, E_star, T_star, dt)
    new_state = SimulationState(I, DGField(mesh, E_it), DGField(mesh, F_it), DGField(mesh, T_it),
                                t=report.t, step=report.step)
    return new_state, report


def advance_unaccelerated(problem: SlabProblem, state: SimulationState, dt: float,
                          cfg: SolverConfig) -> Tuple[SimulationState, TimeStepReport]:
    """Sweep on the latest temperature, then eliminate T node by node; repeat."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    mesh = problem.mesh
    c = problem.constants.c
    report = TimeStepReport(step=state.step + 1, t=state.t + dt, dt=dt, method="unaccelerated")
    T_star = state.T.values
    sigma = eval_multigroup(problem.materials, mesh, state.T.element_averages(), problem.groups)
    sigma_dof = sigma.at_dofs(mesh)
    kappa = problem.cv / dt
    E_star = moments(state.I, problem.quad, problem.constants).E

    E_it, T_it = state.E.values.copy(), T_star.copy()
    first: Optional[float] = None
    for m in range(1, cfg.max_outer_unaccelerated + 1):
        I, mom = _sweep(problem, T_it, state.I, sigma, dt, cfg, report)

        start = time.perf_counter()
        absorption = c * np.sum(sigma_dof * mom.E_g.T, axis=1)
        sigma_P = collapse_P(_collapse_temperature(T_it, T_star, cfg.temperature_floor), sigma, mesh,
                             problem.groups)
        emissivity = sigma_P * problem.constants.a * c
        T_new, floored = solve_material_balance(kappa, emissivity, absorption + kappa * T_star,
                                                T_guess=T_it, tol=cfg.elimination_tol,
                                                floor=cfg.temperature_floor)
        if floored:
            logger.warning("step %d: temperature floored at %d nodes", report.step, floored)
        report.floors += floored
        report.lo_time += time.perf_counter() - start

        change = relative_change(T_new, T_it, mom.E, E_it)
        report.changes.append(change)
        report.outer_iterations = m
        logger.debug("step %d sweep %d: change %.3e", report.step, m, change)
        E_it, T_it = mom.E, T_new

        if _outer_converged(change, first, cfg.unacc_tol):
            report.converged = True
            break
        if first is None:
            first = change
    else:
        raise ConvergenceError(
            f"step {report.step}: unaccelerated iteration did not converge in "
            f"{cfg.max_outer_unaccelerated} sweeps", report=report)

    w = mesh.lumped_weights
    inflow = problem.inflow
    J_left, _, _ = mom.outgoing("left")
    J_right, _, _ = mom.outgoing("right")
    leak = J_left + J_right + inflow.F_in_left + inflow.F_in_right
    report.energy_defect = _energy_defect(problem, float(np.sum(w * (mom.E - E_star))),
                                          float(np.sum(w * problem.cv * (T_it - T_star))),
                                          leak, E_star, T_star, dt)
    new_state = SimulationState(I, DGField(mesh, mom.E), DGField(mesh, mom.F), DGField(mesh, T_it),
                                t=report.t, step=report.step)
    return new_state, report


def advance(problem: SlabProblem, state: SimulationState, dt: float,
            cfg: SolverConfig) -> Tuple[SimulationState, TimeStepReport]:
    if cfg.method == "unaccelerated":
        return advance_unaccelerated(problem, state, dt, cfg)
    return advance_sm(problem, state, dt, cfg)


@dataclass(frozen=True)
class StepPlan:
    dt: float
    t: float
    snapshots: Tuple[int, ...] = ()


@dataclass
class TimeSchedule:
    """Fixed dt with an optional linear ramp; steps are shortened to land on snapshot times."""
    dt: float
    t_final: float
    ramp_initial: Optional[float] = None
    ramp_steps: int = 0
    snapshots: Sequence[float] = ()

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.t_final < 0.0:
            raise ValueError("t_final must be nonnegative")
        if self.ramp_steps < 0 or (self.ramp_steps and not (self.ramp_initial or 0.0) > 0.0):
            raise ValueError("a ramp needs a positive initial dt and a nonnegative step count")
        bad = [s for s in self.snapshots if s < 0.0 or s > self.t_final * (1.0 + 1e-12)]
        if bad:
            raise ValueError(f"snapshot times outside [0, t_final]: {bad}")

    def nominal_dt(self, k: int) -> float:
        if k < self.ramp_steps:
            return self.ramp_initial + (self.dt - self.ramp_initial) * k / self.ramp_steps
        return self.dt


def plan_steps(schedule: TimeSchedule) -> List[StepPlan]:
    """Step sequence with exact landings on every snapshot time and on t_final."""
    targets = sorted(set(float(s) for s in schedule.snapshots if s > 0.0) | {float(schedule.t_final)})
    snap_index = {t: i for i, t in enumerate(sorted(set(float(s) for s in schedule.snapshots)))}
    steps: List[StepPlan] = []
    t = 0.0
    k = 0
    for target in targets:
        if target <= 0.0:
            continue
        while t < target:
            dt = schedule.nominal_dt(k)
            if t + dt >= target - 1e-9 * dt:
                dt = target - t
                t = target
            else:
                t += dt
            hits = (snap_index[target],) if t == target and target in snap_index else ()
            steps.append(StepPlan(dt, t, hits))
            k += 1
    return steps


@dataclass(eq=False)
class Trajectory:
    initial: SimulationState
    final: SimulationState
    reports: List[TimeStepReport] = field(default_factory=list)
    snapshots: Dict[int, SimulationState] = field(default_factory=dict)
    snapshot_times: List[float] = field(default_factory=list)
    probe_positions: List[float] = field(default_factory=list)
    probe_rows: List[List[float]] = field(default_factory=list)

    @property
    def total_sweeps(self) -> int:
        return sum(r.sweeps for r in self.reports)

    @property
    def total_floors(self) -> int:
        return sum(r.floors for r in self.reports)


def _probe_row(state: SimulationState, positions: Sequence[float]) -> List[float]:
    if not positions:
        return [state.t]
    return [state.t, *state.T(np.asarray(positions, dtype=float)).tolist()]


def run(problem: SlabProblem, cfg: SolverConfig, schedule: TimeSchedule,
        probes: Sequence[float] = (), progress: bool = False,
        checkpoint_dir: Optional[Path] = None,
        on_step: Optional[Callable[[SimulationState, TimeStepReport], None]] = None) -> Trajectory:
    """March the schedule; a failing step writes a checkpoint (if a directory is given) and re-raises."""
    outside = [float(p) for p in probes if not problem.mesh.contains(p)]
    if outside:
        x0, x1 = problem.mesh.nodes[0], problem.mesh.nodes[-1]
        raise ValueError(f"probe positions outside the domain [{x0}, {x1}]: {outside}")
    state = initial_state(problem)
    snap_times = sorted(set(float(s) for s in schedule.snapshots))
    traj = Trajectory(initial=state, final=state, snapshot_times=snap_times,
                      probe_positions=[float(p) for p in probes])
    for i, ts in enumerate(snap_times):
        if ts == 0.0:
            traj.snapshots[i] = state.copy()
    traj.probe_rows.append(_probe_row(state, probes))

    plan = plan_steps(schedule)
    logger.info("%s: %s method, %d elements, %d steps", problem.name, cfg.method,
                problem.mesh.n_elements, len(plan))
    with tqdm(total=len(plan), disable=not progress, unit="step", desc=problem.name) as bar:
        for item in plan:
            try:
                state, report = advance(problem, state, item.dt, cfg)
            except SmtrtError:
                logger.error("step %d failed at t = %.6g ns", state.step + 1, state.t + item.dt)
                if checkpoint_dir is not None:
                    from .output import write_checkpoint
                    write_checkpoint(Path(checkpoint_dir), state, problem)
                raise
            state.t = item.t
            report.t = item.t
            traj.reports.append(report)
            for idx in item.snapshots:
                traj.snapshots[idx] = state.copy()
            traj.probe_rows.append(_probe_row(state, probes))
            logger.info("step %d t=%.6g: %d outer, %d sweeps", report.step, report.t,
                        report.outer_iterations, report.sweeps)
            if on_step is not None:
                on_step(state, report)
            bar.update(1)
    traj.final = state
    return traj
