"""Impulse-controlled system models: schedule, system, controls, trajectories."""

import numpy as np
from pydantic import Field, computed_field, field_validator, model_validator

from ..exceptions import DimensionMismatchError, InvalidParameterError, ScheduleError
from .base import ImpulseModel, Matrix, Vector


def nu(j: int, hbar: int) -> int:
    """Slot index of the j-th impulse, cycling through 1..hbar.

    Agrees with j - [j/hbar]*hbar under the strict floor [s] = max{k : k < s},
    so nu(hbar) = hbar rather than 0.
    """
    if j < 1 or hbar < 1:
        raise InvalidParameterError("j/hbar", (j, hbar), "j >= 1 and hbar >= 1")
    return (j - 1) % hbar + 1


class PeriodicSchedule(ImpulseModel):
    """Impulse instants t_1 < ... < t_hbar of one period, extended periodically."""

    times: list[float] = Field(description="Instants t_1..t_hbar of the first period")

    @field_validator("times")
    @classmethod
    def _check_increasing(cls, times: list[float]) -> list[float]:
        if not times:
            raise ScheduleError("schedule needs at least one impulse instant")
        if times[0] <= 0.0:
            raise ScheduleError(f"first instant must be positive, got {times[0]}")
        for previous, current in zip(times, times[1:], strict=False):
            if current <= previous:
                raise ScheduleError(
                    f"instants must be strictly increasing: {previous} >= {current}"
                )
        return times

    @computed_field
    @property
    def hbar(self) -> int:
        """Number of impulses per period."""
        return len(self.times)

    @property
    def period(self) -> float:
        """Period length t_hbar."""
        return self.times[-1]

    def nu(self, j: int) -> int:
        return nu(j, self.hbar)

    def instant(self, j: int) -> float:
        """Extended instant t_j, with t_0 = 0 and t_{j+k*hbar} = t_j + k*t_hbar."""
        if j < 0:
            raise InvalidParameterError("j", j, "j >= 0")
        if j == 0:
            return 0.0
        k, r = divmod(j - 1, self.hbar)
        return self.times[r] + k * self.period

    def interval(self, k: int) -> float:
        """Length t_k - t_{k-1} of slot k in 1..hbar."""
        start = self.times[k - 2] if k > 1 else 0.0
        return self.times[k - 1] - start

    @classmethod
    def uniform(cls, step: float, hbar: int = 1) -> "PeriodicSchedule":
        """Equally spaced instants t_j = j*step for j = 1..hbar."""
        if step <= 0.0:
            raise ScheduleError(f"uniform step must be positive, got {step}")
        return cls(times=[step * (j + 1) for j in range(hbar)])


def extend_schedule(sched: PeriodicSchedule, j: int) -> float:
    return sched.instant(j)


class ImpulseSystem(ImpulseModel):
    """Finite-dimensional impulse system given by per-slot flows and input maps.

    Between instants the state is propagated by E_{nu(j)}; at t_j the impulse
    B_{nu(j)} u_j is added.
    """

    schedule: PeriodicSchedule = Field(description="Periodic impulse schedule")
    flows: list[Matrix] = Field(description="Flow propagators E_1..E_hbar")
    inputs: list[Matrix] = Field(description="Impulse input matrices B_1..B_hbar")

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ImpulseSystem":
        hbar = self.schedule.hbar
        if len(self.flows) != hbar:
            raise DimensionMismatchError("flows", f"{hbar} matrices", len(self.flows))
        if len(self.inputs) != hbar:
            raise DimensionMismatchError("inputs", f"{hbar} matrices", len(self.inputs))
        d = self.flows[0].shape[0]
        m = self.inputs[0].shape[1]
        for k, (E, B) in enumerate(zip(self.flows, self.inputs, strict=True), start=1):
            if E.shape != (d, d):
                raise DimensionMismatchError(f"E_{k}", (d, d), E.shape)
            if B.shape != (d, m):
                raise DimensionMismatchError(f"B_{k}", (d, m), B.shape)
        return self

    @computed_field
    @property
    def state_dim(self) -> int:
        return self.flows[0].shape[0]

    @computed_field
    @property
    def input_dim(self) -> int:
        return self.inputs[0].shape[1]

    @property
    def hbar(self) -> int:
        return self.schedule.hbar

    def flow(self, j: int) -> np.ndarray:
        """Flow E_{nu(j)} applied before the j-th impulse."""
        return self.flows[self.schedule.nu(j) - 1]

    def input(self, j: int) -> np.ndarray:
        """Input matrix B_{nu(j)} of the j-th impulse."""
        return self.inputs[self.schedule.nu(j) - 1]

    def check_state(self, x: np.ndarray, what: str = "x0") -> np.ndarray:
        vector = np.asarray(x, dtype=float).reshape(-1)
        if vector.shape != (self.state_dim,):
            raise DimensionMismatchError(what, (self.state_dim,), vector.shape)
        return vector


class ControlSequence(ImpulseModel):
    """Finite control prefix u_1..u_n with an l2 bound on the untruncated tail."""

    values: Matrix = Field(description="Rows u_1..u_n")
    tail_norm: float | None = Field(
        default=0.0, ge=0.0, description="l2 norm bound of the tail after u_n"
    )

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def input_dim(self) -> int:
        return self.values.shape[1]

    @property
    def prefix_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def l2_norm(self) -> float:
        """Prefix l2 norm plus the tail bound (infinite when no bound is known)."""
        tail = np.inf if self.tail_norm is None else self.tail_norm
        return self.prefix_norm + tail

    def __getitem__(self, j: int) -> np.ndarray:
        """Control u_j for 1-based j; zero beyond the prefix."""
        if 1 <= j <= self.steps:
            return self.values[j - 1]
        return np.zeros(self.input_dim)

    def concatenate(self, other: "ControlSequence") -> "ControlSequence":
        if other.input_dim != self.input_dim:
            raise DimensionMismatchError("control blocks", self.input_dim, other.input_dim)
        return ControlSequence(
            values=np.vstack([self.values, other.values]), tail_norm=other.tail_norm
        )

    @classmethod
    def zeros(cls, steps: int, input_dim: int) -> "ControlSequence":
        return cls(values=np.zeros((steps, input_dim)))


class Trajectory(ImpulseModel):
    """States sampled just before (x(t_j)) and just after (x(t_j+)) each impulse."""

    x0: Vector = Field(description="Initial state x(0)")
    times: Vector = Field(description="Instants t_1..t_n")
    pre: Matrix = Field(description="Rows x(t_j)")
    post: Matrix = Field(description="Rows x(t_j+)")

    @property
    def steps(self) -> int:
        return self.pre.shape[0]

    @computed_field
    @property
    def norms_pre(self) -> list[float]:
        return np.linalg.norm(self.pre, axis=1).tolist()

    @computed_field
    @property
    def norms_post(self) -> list[float]:
        return np.linalg.norm(self.post, axis=1).tolist()

    def concatenate(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(
            x0=self.x0,
            times=np.concatenate([self.times, other.times]),
            pre=np.vstack([self.pre, other.pre]),
            post=np.vstack([self.post, other.post]),
        )


class FeedbackLaw(ImpulseModel):
    """Periodic feedback gains F_1..F_hbar."""

    gains: list[Matrix] = Field(description="Gains F_k of shape (m, d)")

    @property
    def hbar(self) -> int:
        return len(self.gains)

    def check(self, system: ImpulseSystem) -> None:
        if self.hbar != system.hbar:
            raise DimensionMismatchError("feedback gains", system.hbar, self.hbar)
        shape = (system.input_dim, system.state_dim)
        for k, F in enumerate(self.gains, start=1):
            if F.shape != shape:
                raise DimensionMismatchError(f"F_{k}", shape, F.shape)

    @classmethod
    def zero(cls, system: ImpulseSystem) -> "FeedbackLaw":
        shape = (system.input_dim, system.state_dim)
        return cls(gains=[np.zeros(shape) for _ in range(system.hbar)])


class DecayFit(ImpulseModel):
    """Least-squares fit of log-norms against time: ||x(t_j+)|| ~ C exp(-mu t_j) ||x0||."""

    C: float = Field(description="Fitted constant")
    mu: float = Field(description="Fitted exponential rate (inf when the state vanishes)")
    samples: int = Field(description="Number of samples used by the fit")

    @property
    def stable(self) -> bool:
        return self.mu > 0.0
