"""
Run configuration: a pydantic schema over a JSON file.

Every level forbids unknown keys. ``parse_config`` turns JSON syntax errors
and schema violations into a single ConfigurationError whose ``errors``
list carries one ``file:line:col: location: message`` entry per problem.
"""
from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from .bench import BUILTIN_SPECS, ProblemSpec, Region
from .driver import SlabProblem, SolverConfig, TimeSchedule
from .errors import ConfigurationError
from .opacity import MaterialModel
from .spectral import GroupStructure

logger = logging.getLogger(__name__)

MethodName = Literal["consistent", "independent", "unaccelerated"]
ProblemName = Literal["marshak", "larsen", "equilibrium", "gray_slab"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SolverSettings(_Strict):
    outer_tol: float = Field(1e-3, gt=0.0, lt=1.0)
    unacc_tol: float = Field(1e-4, gt=0.0, lt=1.0)
    inner_tol: float = Field(1e-3, gt=0.0, lt=1.0)
    linear_tol: float = Field(1e-10, gt=0.0, lt=1.0)
    elimination_tol: float = Field(1e-10, gt=0.0, lt=1.0)
    time_edge_source: Literal["high_order", "low_order"] = "high_order"
    max_outer: PositiveInt = 200
    max_outer_unaccelerated: PositiveInt = 50_000
    max_inner: PositiveInt = 50
    linear_solver: Literal["pcg", "banded"] = "pcg"
    temperature_update: Literal["nonlinear", "linear"] = "nonlinear"
    gray_opacity: Literal["linear", "constant"] = "linear"
    upwind_sign: Literal[1, -1] = 1
    temperature_floor: PositiveFloat = 1e-8
    fixup: bool = True


class DtRamp(_Strict):
    initial: PositiveFloat
    steps: PositiveInt


class StudySettings(_Strict):
    mesh_ladder: List[PositiveInt] = [32, 64, 128, 256]
    dt_ladder: List[PositiveFloat] = [4e-3, 2e-3, 1e-3, 5e-4]
    reference_elements: PositiveInt = 1024
    reference_dt: PositiveFloat = 2.5e-4
    methods: List[MethodName] = ["consistent", "independent"]


class CompareSettings(_Strict):
    elements: Optional[PositiveInt] = None
    dt_ladder: List[PositiveFloat] = []
    methods: List[MethodName] = ["consistent", "independent", "unaccelerated"]


class InlineMaterial(_Strict):
    name: str = "material"
    kind: Literal["power_law", "larsen", "constant"]
    cv: PositiveFloat
    coefficient: float = 0.0
    exponent: float = 0.0
    sigma: List[NonNegativeFloat] = []

    def build(self) -> MaterialModel:
        if self.kind == "power_law":
            return MaterialModel.power_law(self.coefficient, self.exponent, self.cv, self.name)
        if self.kind == "larsen":
            return MaterialModel.larsen(self.coefficient, self.cv, self.name)
        return MaterialModel.constant(self.sigma, self.cv, self.name)


class InlineRegion(_Strict):
    x0: float
    x1: float
    material: int = Field(ge=0)


class InlineProblem(_Strict):
    name: str = "inline"
    domain: Tuple[float, float]
    materials: List[InlineMaterial] = Field(min_length=1)
    regions: List[InlineRegion] = []
    group_bounds: Optional[List[NonNegativeFloat]] = None
    T_left: PositiveFloat
    T_right: PositiveFloat
    T_initial: PositiveFloat
    t_final: NonNegativeFloat
    sn: PositiveInt = 6

    def to_spec(self) -> ProblemSpec:
        groups = GroupStructure.gray() if self.group_bounds is None else GroupStructure(self.group_bounds)
        return ProblemSpec(
            name=self.name,
            domain=tuple(self.domain),
            materials=tuple(m.build() for m in self.materials),
            groups=groups,
            T_left=self.T_left,
            T_right=self.T_right,
            T_initial=self.T_initial,
            t_final=self.t_final,
            sn=self.sn,
            regions=tuple(Region(r.x0, r.x1, r.material) for r in self.regions),
        )


def _resolve_spec(problem: Union[str, InlineProblem], options: Dict[str, Union[float, List[float]]]) -> ProblemSpec:
    if isinstance(problem, InlineProblem):
        return problem.to_spec()
    options = {k: tuple(v) if isinstance(v, list) else v for k, v in options.items()}
    return BUILTIN_SPECS[problem](**options)


class RunConfig(_Strict):
    problem: Union[ProblemName, InlineProblem] = "marshak"
    problem_options: Dict[str, Union[float, List[float]]] = {}
    method: MethodName = "consistent"
    elements: Optional[PositiveInt] = None
    nodes: Optional[List[float]] = None
    sn: Optional[PositiveInt] = None
    dt: float
    dt_ramp: Optional[DtRamp] = None
    t_final: Optional[NonNegativeFloat] = None
    snapshots: List[NonNegativeFloat] = []
    probes: List[float] = []
    output_dir: str = "out"
    deterministic: bool = True
    progress: bool = False
    solver: SolverSettings = SolverSettings()
    study: StudySettings = StudySettings()
    compare: CompareSettings = CompareSettings()

    @field_validator("dt")
    @classmethod
    def _dt_positive(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError("dt must be positive")
        return value

    @field_validator("probes")
    @classmethod
    def _probes_inside(cls, value: List[float], info: ValidationInfo) -> List[float]:
        if not value or "problem" not in info.data:
            return value
        try:
            x0, x1 = _resolve_spec(info.data["problem"], info.data.get("problem_options", {})).domain
        except (TypeError, ValueError):
            # reported when the problem is built
            return value
        outside = [p for p in value if not x0 <= p <= x1]
        if outside:
            raise ValueError(f"probe positions {outside} lie outside the domain [{x0}, {x1}]")
        return value

    @field_validator("sn")
    @classmethod
    def _sn_even(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and (value < 2 or value % 2):
            raise ValueError("sn must be a positive even integer")
        return value

    @model_validator(mode="after")
    def _one_mesh(self) -> "RunConfig":
        if (self.elements is None) == (self.nodes is None):
            raise ValueError("give exactly one of 'elements' or 'nodes'")
        if self.problem_options and not isinstance(self.problem, str):
            raise ValueError("problem_options only apply to built-in problems")
        return self

    def spec(self) -> ProblemSpec:
        """Resolve the problem, applying options and the t_final override."""
        try:
            spec = _resolve_spec(self.problem, self.problem_options)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"cannot build problem: {exc}") from exc
        if self.t_final is not None:
            spec = spec.replace(t_final=self.t_final)
        return spec

    def build_problem(self, spec: Optional[ProblemSpec] = None) -> SlabProblem:
        spec = spec or self.spec()
        try:
            return spec.build(n_elements=self.elements, nodes=self.nodes, sn=self.sn)
        except ValueError as exc:
            raise ConfigurationError(f"cannot build mesh: {exc}") from exc

    def solver_config(self, method: Optional[str] = None) -> SolverConfig:
        return SolverConfig(method=method or self.method, **self.solver.model_dump())

    def schedule(self, t_final: float) -> TimeSchedule:
        ramp = self.dt_ramp
        try:
            return TimeSchedule(self.dt, t_final,
                                ramp_initial=ramp.initial if ramp else None,
                                ramp_steps=ramp.steps if ramp else 0,
                                snapshots=tuple(self.snapshots))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc


def _position(text: str, key: str) -> Optional[Tuple[int, int]]:
    """1-based (line, column) of the first occurrence of a JSON key."""
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if match is None:
        return None
    before = text[:match.start()]
    line = before.count("\n") + 1
    col = match.start() - (before.rfind("\n") + 1) + 1
    return line, col


def _itemize(exc: ValidationError, text: str, source: str) -> List[str]:
    items = []
    for err in exc.errors():
        loc = [str(p) for p in err["loc"]]
        where = source
        keys = [p for p in loc if not p.isdigit()]
        pos = _position(text, keys[-1]) if keys and text else None
        if pos is not None:
            where = f"{source}:{pos[0]}:{pos[1]}"
        items.append(f"{where}: {'.'.join(loc) or '<root>'}: {err['msg']}")
    return items


def config_from_dict(data: dict, text: str = "", source: str = "<config>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        items = _itemize(exc, text, source)
        raise ConfigurationError(f"{source}: {len(items)} configuration error(s)", items) from exc


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    cfg = config_from_dict(data, text, str(path))
    logger.debug("loaded configuration from %s", path)
    return cfg
