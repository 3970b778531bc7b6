from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from app import config


def _frozen_array(value: Any, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --- spectral_basis ---------------------------------------------------------


class DomainSpec(BaseModel):
    """Rectangle [0, L] x [0, H] with its spectral truncation."""

    model_config = ConfigDict(frozen=True)

    length_L: float = Field(..., gt=0)
    height_H: float = Field(..., gt=0)
    modes_M: int = Field(default=8, ge=0)
    modes_N: int = Field(default=8, ge=0)
    quad_points: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def _quadrature_resolves_modes(self) -> "DomainSpec":
        need = 2 * max(self.modes_M, self.modes_N) + 2
        if self.quad_points < need:
            raise ValueError(f"quad_points={self.quad_points} cannot resolve mode {max(self.modes_M, self.modes_N)}; need >= {need}")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.modes_M + 1, self.modes_N + 1)

    @property
    def n_modes(self) -> int:
        return (self.modes_M + 1) * (self.modes_N + 1)

    @property
    def area(self) -> float:
        return self.length_L * self.height_H

    def flat_index(self, m: int, n: int) -> int:
        return m * (self.modes_N + 1) + n

    def mode_indices(self) -> List["ModeIndex"]:
        return [ModeIndex(m=m, n=n) for m in range(self.modes_M + 1) for n in range(self.modes_N + 1)]


class ModeIndex(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(..., ge=0)
    n: int = Field(..., ge=0)

    def within(self, domain: DomainSpec) -> bool:
        return self.m <= domain.modes_M and self.n <= domain.modes_N


class SpectralField(BaseModel):
    """Snapshot expanded on the Neumann eigenbasis; coeffs[m, n] is the (m, n) coefficient."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    domain: DomainSpec
    coeffs: np.ndarray

    @field_validator("coeffs", mode="before")
    @classmethod
    def _shape_to_domain(cls, value: Any, info: ValidationInfo) -> np.ndarray:
        domain = info.data.get("domain")
        arr = np.asarray(value, dtype=float)
        if domain is None:
            return _frozen_array(arr)
        if arr.size != domain.n_modes:
            raise ValueError(f"expected {domain.n_modes} coefficients, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        return _frozen_array(arr.reshape(domain.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def coeff(self, m: int, n: int) -> float:
        return float(self.coeffs[m, n])

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(domain=self.domain, coeffs=coeffs)


class GridField(BaseModel):
    """Cell-centred samples on an nx x ny grid; values[i, j] sits at ((i+1/2)L/nx, (j+1/2)H/ny)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nx: int = Field(..., gt=0)
    ny: int = Field(..., gt=0)
    length_L: float = Field(..., gt=0)
    height_H: float = Field(..., gt=0)
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _reshape(cls, value: Any, info: ValidationInfo) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        nx, ny = info.data.get("nx"), info.data.get("ny")
        if nx is None or ny is None:
            return _frozen_array(arr)
        if arr.size != nx * ny:
            raise ValueError(f"expected {nx * ny} grid values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        return _frozen_array(arr.reshape(nx, ny))

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        xs = (np.arange(self.nx) + 0.5) * self.length_L / self.nx
        ys = (np.arange(self.ny) + 0.5) * self.height_H / self.ny
        return xs, ys


# --- goodwill_dynamics -------------------------------------------------------


class ModelParams(BaseModel):
    """Data of the controlled goodwill equation x_t = (D*Laplace - rho) x + b u."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rho: float = Field(..., gt=0)
    horizon_T: float = Field(..., gt=0)
    effectiveness_b: Union[SpectralField, GridField]
    cap_R: float = Field(default=math.inf, gt=0)
    gamma: float = Field(default=1.0, gt=0)
    x0: SpectralField
    diffusion: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def _effectiveness_nonnegative(self) -> "ModelParams":
        from app.spectral.basis import quadrature_grid, reconstruct_on

        b = self.effectiveness_b
        if isinstance(b, GridField):
            if abs(b.length_L - self.domain.length_L) > 1e-12 or abs(b.height_H - self.domain.height_H) > 1e-12:
                raise ValueError("effectiveness grid does not cover the model domain")
            low = float(b.values.min())
            scale = max(1.0, float(np.abs(b.values).max()))
        else:
            if b.domain != self.domain:
                raise ValueError("effectiveness field and x0 live on different domains")
            (x1, _), (x2, _) = quadrature_grid(self.domain)
            vals = reconstruct_on(b, x1, x2)
            low = float(vals.min())
            scale = max(1.0, float(np.abs(vals).max()))
        if low < -1e-10 * scale:
            raise ValueError(f"effectiveness b must be nonnegative on the evaluation grid (min {low:.3g})")
        return self

    @property
    def domain(self) -> DomainSpec:
        return self.x0.domain


class ControlRule(BaseModel):
    """Closed-form control u(t, xi1, xi2); `fn` is vectorized over the point arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tag: str
    parameters: Dict[str, float] = Field(default_factory=dict)
    fn: Callable[[float, np.ndarray, np.ndarray], np.ndarray] = Field(..., exclude=True, repr=False)

    def __call__(self, t: float, xi1: np.ndarray, xi2: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(t, xi1, xi2), dtype=float)


class ControlSignal(BaseModel):
    """Time-sampled control: a per-time coefficient table or a closed-form rule."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    domain: Optional[DomainSpec] = None
    coeffs: Optional[np.ndarray] = None
    rule: Optional[ControlRule] = None

    @field_validator("times", mode="before")
    @classmethod
    def _increasing_from_zero(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value, dtype=float).reshape(-1)
        if arr.size < 2:
            raise ValueError("a control needs at least two time samples")
        if arr[0] != 0.0:
            raise ValueError("control times must start at 0")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("control times must be strictly increasing")
        return _frozen_array(arr)

    @model_validator(mode="after")
    def _one_representation(self) -> "ControlSignal":
        if (self.coeffs is None) == (self.rule is None):
            raise ValueError("a control is either a coefficient table or a rule, not both")
        if self.coeffs is not None:
            if self.domain is None:
                raise ValueError("a coefficient table needs its domain")
            arr = np.asarray(self.coeffs, dtype=float)
            if arr.size != self.times.size * self.domain.n_modes:
                raise ValueError("coefficient table does not match times x modes")
            if not np.all(np.isfinite(arr)):
                raise ValueError("sampled control values must be finite")
            object.__setattr__(self, "coeffs", _frozen_array(arr.reshape((self.times.size,) + self.domain.shape)))
        return self

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def is_rule(self) -> bool:
        return self.rule is not None

    def at(self, j: int) -> SpectralField:
        return SpectralField(domain=self.domain, coeffs=self.coeffs[j])

    def scaled(self, alpha: float) -> "ControlSignal":
        return ControlSignal(times=self.times, domain=self.domain, coeffs=alpha * self.coeffs)

    def plus(self, other: "ControlSignal", alpha: float = 1.0) -> "ControlSignal":
        """Self + alpha * other for coefficient tables on the same time grid."""
        if self.coeffs is None or other.coeffs is None:
            raise ValueError("only coefficient tables can be combined")
        if other.times.shape != self.times.shape or np.any(other.times != self.times):
            raise ValueError("controls are sampled on different time grids")
        return ControlSignal(times=self.times, domain=self.domain, coeffs=self.coeffs + alpha * other.coeffs)


class Trajectory(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    domain: DomainSpec
    coeffs: np.ndarray

    @field_validator("times", "coeffs", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return _frozen_array(value)

    def state(self, j: int) -> SpectralField:
        return SpectralField(domain=self.domain, coeffs=self.coeffs[j])

    @property
    def final(self) -> SpectralField:
        return self.state(-1)


class ObjectiveRule(BaseModel):
    """Pointwise rule for the terminal utility phi0 or running cost h0."""

    model_config = ConfigDict(frozen=True)

    tag: Literal["zero", "linear", "quadratic", "capped_quadratic"]
    scale: float = 1.0
    cap: Optional[float] = Field(default=None, gt=0)


# --- maximum_principle -------------------------------------------------------


class DualArc(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rho: float = Field(..., gt=0)
    horizon_T: float = Field(..., gt=0)
    terminal: Union[Literal["constant_one"], SpectralField] = "constant_one"
    diffusion: float = Field(default=1.0, ge=0)


class CostRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: Literal["quadratic_capped", "linear_capped"]
    cap_R: float = Field(..., gt=0)


class BudgetSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    control: ControlSignal
    lam: float
    budget_M: float
    energy: float


# --- lq_indefinite / lq_targeting -------------------------------------------


class RiccatiModeSolution(BaseModel):
    """Closed form p(t) = -2mu + 1/z(t), z(t) = 1/(2mu) + C e^{-2 mu t}."""

    model_config = ConfigDict(frozen=True)

    mu_k: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    C_k: float
    sign: Literal["p1_negative", "p2_positive"]
    horizon_T: float = Field(..., gt=0)
    escape_time: float = math.inf
    valid_on_horizon: bool = True


class FeedbackLaw(BaseModel):
    model_config = ConfigDict(frozen=True)

    domain: DomainSpec
    mode_solutions: List[RiccatiModeSolution]
    horizon_T: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _one_per_mode(self) -> "FeedbackLaw":
        if len(self.mode_solutions) != self.domain.n_modes:
            raise ValueError("feedback law needs one Riccati solution per retained mode")
        return self


class P1Solution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    law: FeedbackLaw
    trajectory: Trajectory
    control: ControlSignal
    value: float
    margin: float


class TargetSpec(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    target_k: SpectralField
    f: SpectralField


class AdjointModeSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mu_k: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    f_k: float
    times: np.ndarray
    r: np.ndarray

    @field_validator("times", "r", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return _frozen_array(value)


class P2Solution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    law: FeedbackLaw
    control: ControlSignal
    y_trajectory: Trajectory
    x_trajectory: Trajectory
    adjoint: np.ndarray
    value_formula: float
    value_direct: float
    terminal_miss: float


# --- verification ------------------------------------------------------------


class ScalarLQInstance(BaseModel):
    """x_{j+1} = (1 + a dt) x_j + dt u_j + dt f; cost sum dt u_j^2 + w (x_J - target)^2."""

    model_config = ConfigDict(frozen=True)

    a: float
    terminal_weight: float
    target: float = 0.0
    f: float = 0.0
    T: float = Field(..., gt=0)
    steps: int = Field(..., ge=100)
    x0: float = 0.0


class DPResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    steps: int
    value: float
    affine0: float
    gains: np.ndarray
    offsets: np.ndarray
    trajectory: np.ndarray
    control: np.ndarray
    blow_up: bool = False
    blow_up_step: Optional[int] = None


class GridSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    frames: List[GridField]


# --- cli_runner --------------------------------------------------------------


ProblemKind = Literal["simulate", "mp_quadratic", "mp_linear", "budget", "p1", "p2", "p2_sweep", "verify"]


class FieldSpec(BaseModel):
    """`constant` plus `mode m n` lines, or a grid file in the dump format."""

    model_config = ConfigDict(frozen=True)

    constant: float = 0.0
    modes: Dict[Tuple[int, int], float] = Field(default_factory=dict)
    grid_file: Optional[Path] = None

    @model_validator(mode="after")
    def _grid_is_exclusive(self) -> "FieldSpec":
        if self.grid_file is not None and (self.constant != 0.0 or self.modes):
            raise ValueError("grid_file cannot be combined with constant or mode lines")
        return self


class DomainSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    length_L: float = Field(..., gt=0)
    height_H: float = Field(..., gt=0)
    modes_M: int = Field(default=config.DEFAULT_MODES, ge=0)
    modes_N: int = Field(default=config.DEFAULT_MODES, ge=0)
    quad_points: int = Field(default=config.DEFAULT_QUAD_POINTS, ge=1)


class ModelSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rho: float = Field(..., gt=0)
    horizon_T: float = Field(..., gt=0)
    gamma: Optional[float] = Field(default=None, gt=0)
    cap_R: float = Field(default=math.inf, gt=0)
    diffusion: float = Field(default=1.0, ge=0)


class ProblemSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ProblemKind = "simulate"
    budget_M: Optional[float] = Field(default=None, gt=0)
    k0_list: Optional[List[float]] = None
    fd_nx: int = Field(default=config.DEFAULT_FD_CELLS, gt=0)
    fd_ny: int = Field(default=config.DEFAULT_FD_CELLS, gt=0)
    fd_steps: int = Field(default=config.DEFAULT_FD_STEPS, gt=0)
    dp_steps: int = Field(default=config.DEFAULT_DP_STEPS, ge=100)
    control_grid: int = Field(default=config.DEFAULT_CONTROL_GRID, ge=2)
    directions: int = Field(default=config.DEFAULT_DIRECTIONS, ge=1)
    seed: int = Field(default=config.DEFAULT_SEED, ge=0)


class OutputSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    output_dir: Path = Path(config.DEFAULT_OUTPUT_DIR)
    time_steps: int = Field(default=config.DEFAULT_TIME_STEPS, ge=2)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    domain: DomainSettings
    model: ModelSettings
    problem: ProblemSettings = Field(default_factory=ProblemSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    x0: FieldSpec = Field(default_factory=FieldSpec)
    effectiveness: FieldSpec = Field(default_factory=lambda: FieldSpec(constant=1.0))
    target: Optional[FieldSpec] = None


class ConfigViolation(BaseModel):
    model_config = ConfigDict(frozen=True)

    line: Optional[int] = None
    section: Optional[str] = None
    key: Optional[str] = None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        name = ".".join(p for p in (self.section, self.key) if p)
        return f"{where}{name + ': ' if name else ''}{self.message}"


class RunReport(BaseModel):
    problem: str
    values: Dict[str, float] = Field(default_factory=dict)
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict)
    files: List[Path] = Field(default_factory=list)
    ok: bool = True
