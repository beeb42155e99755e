"""
Benchmark problems, discrete reference runs, convergence studies and the
method comparison table.
"""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import SmtrtError
from .fem1d import DGField, Mesh1D, l2_error
from .opacity import MaterialModel
from .quadrature import gauss_legendre_sn
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants
from .transport import BoundaryData
from .driver import SlabProblem, SolverConfig, TimeSchedule, Trajectory, run

logger = logging.getLogger(__name__)

EXACT_ERROR = 1e-12


@dataclass(frozen=True)
class Region:
    """Material ``material`` on [x0, x1)."""
    x0: float
    x1: float
    material: int


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Mesh-independent description of a slab problem."""
    name: str
    domain: Tuple[float, float]
    materials: Tuple[MaterialModel, ...]
    groups: GroupStructure
    T_left: float
    T_right: float
    T_initial: float
    t_final: float
    sn: int = 6
    regions: Tuple[Region, ...] = ()
    constants: SpectralConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        x0, x1 = self.domain
        if not x1 > x0:
            raise ValueError(f"empty domain {self.domain}")
        for region in self.regions:
            if not 0 <= region.material < len(self.materials):
                raise ValueError(f"region {region} references an undefined material")

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def material_ids(self, nodes: np.ndarray) -> np.ndarray:
        """Material of each element, taken at the element midpoint."""
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        ids = np.zeros(mid.size, dtype=int)
        for region in self.regions:
            ids[(mid >= region.x0) & (mid < region.x1)] = region.material
        return ids

    def build(self, n_elements: Optional[int] = None, nodes: Optional[Sequence[float]] = None,
              sn: Optional[int] = None) -> SlabProblem:
        if (n_elements is None) == (nodes is None):
            raise ValueError("give exactly one of n_elements or nodes")
        if nodes is None:
            grid = np.linspace(self.domain[0], self.domain[1], int(n_elements) + 1)
        else:
            grid = np.asarray(nodes, dtype=float)
            tol = 1e-12 * self.length
            if abs(grid[0] - self.domain[0]) > tol or abs(grid[-1] - self.domain[1]) > tol:
                raise ValueError("mesh nodes must span the problem domain")
        mesh = Mesh1D(grid, self.material_ids(grid))
        return SlabProblem(
            name=self.name,
            mesh=mesh,
            quad=gauss_legendre_sn(sn or self.sn),
            groups=self.groups,
            materials=list(self.materials),
            boundary=BoundaryData(self.T_left, self.T_right),
            T_initial=self.T_initial,
            t_final=self.t_final,
            constants=self.constants,
        )

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


def marshak_spec() -> ProblemSpec:
    """Gray Marshak wave: sigma = 1e12 / T^3, 1 keV drive at x = 0."""
    return ProblemSpec(
        name="marshak",
        domain=(0.0, 0.05),
        materials=(MaterialModel.power_law(1e12, -3.0, cv=3e12, name="marshak"),),
        groups=GroupStructure.gray(),
        T_left=1000.0,
        T_right=1.0,
        T_initial=1.0,
        t_final=2.5,
        sn=6,
    )


def larsen_spec(alpha_thick: float = 1e12, alpha_thin: float = 1e9, cv: float = 8.1e10,
                thick: Tuple[float, float] = (1.0, 3.0), T_left: float = 1.0,
                T_right: float = 1000.0, T_initial: float = 1.0) -> ProblemSpec:
    """Thin-thick-thin multigroup slab on [0, 4] cm driven at x = 4."""
    if not 0.0 < thick[0] < thick[1] < 4.0:
        raise ValueError(f"thick region {thick} must lie strictly inside (0, 4)")
    return ProblemSpec(
        name="larsen",
        domain=(0.0, 4.0),
        materials=(MaterialModel.larsen(alpha_thin, cv, name="thin"),
                   MaterialModel.larsen(alpha_thick, cv, name="thick")),
        groups=GroupStructure.logarithmic(1e-2, 3e5, 33),
        T_left=T_left,
        T_right=T_right,
        T_initial=T_initial,
        t_final=10.0,
        sn=6,
        regions=(Region(thick[0], thick[1], 1),),
    )


def equilibrium_spec(T: float = 1.0, t_final: float = 0.04, groups: Optional[GroupStructure] = None,
                     material: Optional[MaterialModel] = None) -> ProblemSpec:
    """Uniform temperature with matching boundary sources."""
    return ProblemSpec(
        name="equilibrium",
        domain=(0.0, 0.05),
        materials=(material or MaterialModel.power_law(1e12, -3.0, cv=3e12, name="marshak"),),
        groups=groups or GroupStructure.gray(),
        T_left=T,
        T_right=T,
        T_initial=T,
        t_final=t_final,
        sn=4,
    )


def gray_slab_spec(sigma: float = 1.0, length: float = 1.0, cv: float = 1e10,
                   T_left: float = 100.0, T_right: float = 1.0, T_initial: float = 1.0,
                   t_final: float = 0.1, sn: int = 8) -> ProblemSpec:
    """Homogeneous constant-opacity gray slab; sigma * length sets thin or thick."""
    return ProblemSpec(
        name="gray_slab",
        domain=(0.0, length),
        materials=(MaterialModel.constant([sigma], cv, name="gray"),),
        groups=GroupStructure.gray(),
        T_left=T_left,
        T_right=T_right,
        T_initial=T_initial,
        t_final=t_final,
        sn=sn,
    )


BUILTIN_SPECS = {
    "marshak": marshak_spec,
    "larsen": larsen_spec,
    "equilibrium": equilibrium_spec,
    "gray_slab": gray_slab_spec,
}


@dataclass(eq=False)
class Reference:
    """Mesh nodes plus DG coefficients of T, E, F at the final time."""
    name: str
    method: str
    dt: float
    t_final: float
    nodes: np.ndarray
    T: np.ndarray
    E: np.ndarray
    F: np.ndarray

    @property
    def mesh(self) -> Mesh1D:
        return Mesh1D(self.nodes)

    def field(self, name: str) -> DGField:
        return DGField(self.mesh, getattr(self, name))

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @classmethod
    def from_state(cls, name: str, method: str, dt: float, state) -> "Reference":
        mesh = state.T.mesh
        return cls(name, method, dt, state.t, mesh.nodes.copy(), state.T.values.copy(),
                   state.E.values.copy(), state.F.values.copy())


def _simulate(spec: ProblemSpec, n_elements: int, dt: float, cfg: SolverConfig,
              t_final: Optional[float] = None) -> Trajectory:
    problem = spec.build(n_elements=n_elements)
    schedule = TimeSchedule(dt, spec.t_final if t_final is None else t_final)
    return run(problem, cfg, schedule)


def make_reference(spec: ProblemSpec, n_elements: int, dt: float, cfg: SolverConfig,
                   t_final: Optional[float] = None) -> Reference:
    """Resolved run of the same discretization, used as ground truth."""
    traj = _simulate(spec, n_elements, dt, cfg, t_final)
    return Reference.from_state(spec.name, cfg.method, dt, traj.final)


@dataclass(eq=False)
class ConvergenceStudy:
    method: str
    mesh_ladder: List[int]
    dt_ladder: List[float]
    reference: Reference
    errors: Dict[Tuple[int, float], float] = field(default_factory=dict)
    excluded: Dict[Tuple[int, float], str] = field(default_factory=dict)
    space_order: Optional[float] = None
    time_order: Optional[float] = None
    space_exact: bool = False
    time_exact: bool = False

    def table(self) -> pd.DataFrame:
        rows = [{"method": self.method, "elements": n, "dt": dt, "l2_error": err}
                for (n, dt), err in sorted(self.errors.items())]
        return pd.DataFrame(rows, columns=["method", "elements", "dt", "l2_error"])


def estimate_order(sizes: Sequence[float], errors: Sequence[float]) -> Tuple[Optional[float], bool]:
    """Least-squares log-log slope; (None, True) when every error is at round-off."""
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if errors.size and np.all(errors <= EXACT_ERROR):
        return None, True
    keep = errors > 0.0
    if np.count_nonzero(keep) < 2:
        return None, False
    slope, _ = np.polyfit(np.log(sizes[keep]), np.log(errors[keep]), 1)
    return float(slope), False


def _run_members(members: Iterable, worker, threads: int) -> Dict:
    members = list(members)
    if threads > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, members))
    else:
        results = [worker(m) for m in members]
    return dict(zip(members, results))


def convergence_study(spec: ProblemSpec, mesh_ladder: Sequence[int], dt_ladder: Sequence[float],
                      cfg: SolverConfig, reference: Reference, threads: int = 1) -> ConvergenceStudy:
    """Temperature errors at t_final against a finer reference, with observed orders."""
    mesh_ladder = sorted(int(n) for n in mesh_ladder)
    dt_ladder = sorted((float(d) for d in dt_ladder), reverse=True)
    if not mesh_ladder or not dt_ladder:
        raise ValueError("study ladders must not be empty")
    if reference.n_elements <= mesh_ladder[-1] or reference.dt >= dt_ladder[-1]:
        raise ValueError("the reference must be finer in space and time than every study member")
    ref_T = reference.field("T")
    study = ConvergenceStudy(cfg.method, mesh_ladder, dt_ladder, reference)

    def member(key):
        n, dt = key
        logger.info("study member: %d elements, dt = %g", n, dt)
        try:
            traj = _simulate(spec, n, dt, cfg, reference.t_final)
        except SmtrtError as exc:
            return None, str(exc)
        return l2_error(traj.final.T, ref_T), None

    results = _run_members(((n, dt) for n in mesh_ladder for dt in dt_ladder), member, threads)
    for key in sorted(results):
        err, failure = results[key]
        if failure is not None:
            logger.warning("excluding member %s: %s", key, failure)
            study.excluded[key] = failure
        else:
            study.errors[key] = err

    dt_min, n_max = dt_ladder[-1], mesh_ladder[-1]
    row = [(spec.length / n, study.errors[(n, dt_min)]) for n in mesh_ladder if (n, dt_min) in study.errors]
    col = [(dt, study.errors[(n_max, dt)]) for dt in dt_ladder if (n_max, dt) in study.errors]
    if row:
        study.space_order, study.space_exact = estimate_order(*zip(*row))
    if col:
        study.time_order, study.time_exact = estimate_order(*zip(*col))
    logger.info("observed orders: space %s, time %s", study.space_order, study.time_order)
    return study


def compare_methods(spec: ProblemSpec, n_elements: int, dt_ladder: Sequence[float], cfg: SolverConfig,
                    methods: Sequence[str] = ("consistent", "independent", "unaccelerated"),
                    t_final: Optional[float] = None, threads: int = 1) -> pd.DataFrame:
    """Total sweeps and wall time per method and dt, with speedups over the unaccelerated scheme.

    A member that fails stays in the table with ``converged`` false and NaN
    counts; ratios against a failed baseline are NaN as well.
    """
    if "unaccelerated" not in methods:
        raise ValueError("the comparison needs the unaccelerated method as its baseline")

    def member(key):
        method, dt = key
        run_cfg = dataclasses.replace(cfg, method=method)
        try:
            traj = _simulate(spec, n_elements, dt, run_cfg, t_final)
        except SmtrtError as exc:
            return None, str(exc)
        return (traj.total_sweeps, sum(r.outer_iterations for r in traj.reports),
                sum(r.wall_time for r in traj.reports)), None

    keys = [(m, float(dt)) for dt in dt_ladder for m in methods]
    results = _run_members(keys, member, threads)
    nan = float("nan")
    rows = []
    for dt in dt_ladder:
        base, _ = results[("unaccelerated", float(dt))]
        base_sweeps, _, base_time = base if base is not None else (nan, nan, nan)
        for method in methods:
            counts, failure = results[(method, float(dt))]
            if failure is not None:
                logger.warning("excluding %s at dt = %g: %s", method, dt, failure)
                counts = (nan, nan, nan)
            sweeps, outer, wall = counts
            rows.append({
                "dt": float(dt),
                "method": method,
                "converged": failure is None,
                "sweeps": sweeps,
                "outer_iterations": outer,
                "wall_time": wall,
                "sweep_ratio": base_sweeps / sweeps,
                "time_ratio": base_time / wall if wall > 0.0 else nan,
            })
    return pd.DataFrame(rows)


def front_position(T: DGField, threshold: float = 500.0) -> float:
    """Left node of the leftmost element whose average temperature is below ``threshold``."""
    below = np.flatnonzero(T.element_averages() < threshold)
    if below.size == 0:
        return float(T.mesh.nodes[-1])
    return float(T.mesh.nodes[below[0]])
