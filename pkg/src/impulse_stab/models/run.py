"""Run configuration and result record models."""

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..exceptions import ConfigurationError, StabilizationError
from .heat import HeatConfig
from .riccati import CostWeights
from .system import FeedbackLaw, ImpulseSystem, PeriodicSchedule


def _reshape(flat: list[float], rows: int, cols: int, what: str) -> np.ndarray:
    if len(flat) != rows * cols:
        raise ConfigurationError(
            f"{what} needs {rows}x{cols} = {rows * cols} row-major entries, got {len(flat)}"
        )
    return np.asarray(flat, dtype=float).reshape(rows, cols)


class RunSection(BaseModel):
    """Base for config sections: plain JSON data, unknown keys rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSpec(RunSection):
    """Abstract system with row-major flat matrices."""

    state_dim: int = Field(ge=1)
    input_dim: int = Field(ge=1)
    times: list[float]
    flows: list[list[float]]
    inputs: list[list[float]]


class HeatSpec(RunSection):
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    S: list[float]
    D: list[list[float]]
    omegas: list[tuple[float, float]]
    N: int = Field(default=12, ge=1)
    times: list[float] | None = Field(default=None, description="Generated when omitted")
    period_hint: float = Field(default=1.0, gt=0.0)


class WeightsSpec(RunSection):
    """Either scalar shorthands q, r or per-slot flat matrices Q, R."""

    q: float = Field(default=1.0, gt=0.0)
    r: float = Field(default=1.0, gt=0.0)
    Q: list[list[float]] | None = None
    R: list[list[float]] | None = None


class SolverKnobs(RunSection):
    tol: float | None = Field(default=None, gt=0.0)
    max_periods: int | None = Field(default=None, ge=1)
    rank_threshold: float | None = Field(default=None, gt=0.0)
    K_max: int | None = Field(default=None, ge=1)
    seed: int | None = None


class TaskParams(RunSection):
    sigma: float = Field(default=0.5)
    eps: float = Field(default=1e-6, gt=0.0)
    K: int = Field(default=1, ge=1, description="Horizon index of the observability pair")
    theta: float | None = None
    periods: int = Field(default=30, ge=1, description="Simulated periods")
    x0: list[float] | None = None
    mode: Literal["search", "sufficient"] = "sufficient"
    observation_range: Literal["full", "exclusive"] = "exclusive"
    steer: bool = False
    cross_check: bool = False
    feedback: Literal["synthesized", "zero", "explicit"] = "synthesized"
    gains: list[list[float]] | None = Field(default=None, description="Row-major m x d gain per slot")

    @field_validator("sigma")
    @classmethod
    def _check_sigma(cls, sigma: float) -> float:
        if not 0.0 < sigma < 1.0:
            raise ConfigurationError(f"sigma must lie in (0, 1), got {sigma}")
        return sigma


class BatterySpec(RunSection):
    count: int = Field(default=50, ge=0)
    d_min: int = Field(default=1, ge=1)
    d_max: int = Field(default=4, ge=1)
    m_max: int = Field(default=2, ge=1)
    hbar_max: int = Field(default=2, ge=1)
    strata: list[
        Literal["controllable", "uncontrollable-stable", "uncontrollable-unstable"]
    ] = Field(
        default_factory=lambda: ["controllable", "uncontrollable-stable", "uncontrollable-unstable"]
    )


class RunConfig(RunSection):
    """A single CLI run description loaded from a JSON document."""

    kind: Literal["abstract", "heat"] = "abstract"
    system: SystemSpec | None = None
    heat: HeatSpec | None = None
    weights: WeightsSpec = Field(default_factory=WeightsSpec)
    solver: SolverKnobs = Field(default_factory=SolverKnobs)
    task: TaskParams = Field(default_factory=TaskParams)
    battery: BatterySpec = Field(default_factory=BatterySpec)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """Read and validate a config file.

        Raises:
            ConfigurationError: If the file is missing, not JSON, or fails validation
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
            return cls.model_validate(json.loads(text))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise ConfigurationError(f"Cannot load config {path}: {e}") from e

    def digest(self) -> str:
        """sha256 of the canonical JSON form of this config."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def build_system(self) -> ImpulseSystem:
        if self.system is None:
            raise ConfigurationError("abstract run needs a 'system' section")
        spec = self.system
        d, m = spec.state_dim, spec.input_dim
        try:
            return ImpulseSystem(
                schedule=PeriodicSchedule(times=spec.times),
                flows=[_reshape(E, d, d, f"flows[{k}]") for k, E in enumerate(spec.flows)],
                inputs=[_reshape(B, d, m, f"inputs[{k}]") for k, B in enumerate(spec.inputs)],
            )
        except ConfigurationError:
            raise
        except StabilizationError as e:
            raise ConfigurationError(f"Invalid system: {e.message}", details=e.details) from e

    def build_heat(self) -> HeatConfig:
        if self.heat is None:
            raise ConfigurationError("heat run needs a 'heat' section")
        spec = self.heat
        try:
            return HeatConfig(
                S=_reshape(spec.S, spec.n, spec.n, "S"),
                D=[_reshape(D, spec.n, spec.m, f"D[{k}]") for k, D in enumerate(spec.D)],
                omegas=spec.omegas,
                N=spec.N,
            )
        except ConfigurationError:
            raise
        except StabilizationError as e:
            raise ConfigurationError(f"Invalid heat config: {e.message}", details=e.details) from e

    def build_weights(self, system: ImpulseSystem) -> CostWeights:
        spec = self.weights
        if spec.Q is None and spec.R is None:
            return CostWeights.scalar(system, spec.q, spec.r)
        d, m = system.state_dim, system.input_dim
        Q = spec.Q or [list((spec.q * np.eye(d)).ravel()) for _ in range(system.hbar)]
        R = spec.R or [list((spec.r * np.eye(m)).ravel()) for _ in range(system.hbar)]
        try:
            weights = CostWeights(
                Q=[_reshape(M, d, d, f"Q[{k}]") for k, M in enumerate(Q)],
                R=[_reshape(M, m, m, f"R[{k}]") for k, M in enumerate(R)],
            )
            weights.check(system)
        except ConfigurationError:
            raise
        except StabilizationError as e:
            raise ConfigurationError(f"Invalid weights: {e.message}", details=e.details) from e
        return weights

    def build_feedback(self, system: ImpulseSystem) -> FeedbackLaw | None:
        """Zero or explicit gains from the task section; None asks for synthesis."""
        task = self.task
        if task.feedback == "synthesized":
            return None
        if task.feedback == "zero":
            return FeedbackLaw.zero(system)
        if task.gains is None:
            raise ConfigurationError("explicit feedback needs task.gains")
        d, m = system.state_dim, system.input_dim
        feedback = FeedbackLaw(gains=[_reshape(F, m, d, f"gains[{k}]") for k, F in enumerate(task.gains)])
        try:
            feedback.check(system)
        except StabilizationError as e:
            raise ConfigurationError(f"Invalid gains: {e.message}", details=e.details) from e
        return feedback

    def x0(self, d: int) -> np.ndarray:
        if self.task.x0 is None:
            return np.ones(d) / np.sqrt(d)
        if len(self.task.x0) != d:
            raise ConfigurationError(f"x0 needs {d} entries, got {len(self.task.x0)}")
        return np.asarray(self.task.x0, dtype=float)


class ResultRecord(BaseModel):
    """Summary record of one CLI run."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    task: str
    verdicts: dict[str, Any] = Field(default_factory=dict)
    scalars: dict[str, Any] = Field(default_factory=dict)
    details: dict[str, Any] = Field(default_factory=dict)
    timing: dict[str, float] = Field(default_factory=dict)
    provenance: dict[str, Any] = Field(default_factory=dict)

    def to_json(self, include_timing: bool = True) -> str:
        """Deterministic JSON text with sorted keys."""
        exclude = None if include_timing else {"timing"}
        data = self.model_dump(mode="json", exclude=exclude)
        return json.dumps(data, sort_keys=True, indent=2)
