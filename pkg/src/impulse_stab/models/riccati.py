"""Linear-quadratic cost and Riccati solution models."""

import numpy as np
from pydantic import Field, model_validator

from ..exceptions import DimensionMismatchError, WeightsError
from .base import ImpulseModel, Matrix, Verdict
from .system import ImpulseSystem

_SYMMETRY_TOL = 1e-10


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((M + M.T) / 2).min())


def _check_symmetric(name: str, M: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if not np.allclose(M, M.T, atol=_SYMMETRY_TOL * scale, rtol=0.0):
        raise WeightsError(f"{name} is not symmetric")


class CostWeights(ImpulseModel):
    """Periodic stage weights Q_1..Q_hbar and R_1..R_hbar with positivity margins.

    When a margin is omitted it is taken as the smallest eigenvalue over the
    period, which must be strictly positive.
    """

    Q: list[Matrix] = Field(description="State weights Q_k (d x d)")
    R: list[Matrix] = Field(description="Control weights R_k (m x m)")
    q_margin: float | None = Field(default=None, gt=0.0, description="delta with Q_k >= delta I")
    r_margin: float | None = Field(default=None, gt=0.0, description="delta with R_k >= delta I")

    @model_validator(mode="before")
    @classmethod
    def _fill_margins(cls, data: dict) -> dict:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for key, margin in (("Q", "q_margin"), ("R", "r_margin")):
            if data.get(margin) is not None or not data.get(key):
                continue
            smallest = min(_min_eig(np.atleast_2d(np.asarray(M, dtype=float))) for M in data[key])
            if smallest <= 0.0:
                raise WeightsError(
                    f"{key} weights are not positive definite (min eigenvalue {smallest:.3g})",
                    details={"weights": key, "min_eigenvalue": smallest},
                )
            data[margin] = smallest
        return data

    @model_validator(mode="after")
    def _check_margins(self) -> "CostWeights":
        if len(self.Q) != len(self.R):
            raise DimensionMismatchError("weights", f"{len(self.Q)} R matrices", len(self.R))
        for name, mats, margin in (("Q", self.Q, self.q_margin), ("R", self.R, self.r_margin)):
            for k, M in enumerate(mats, start=1):
                _check_symmetric(f"{name}_{k}", M)
                shifted = _min_eig(M) - margin
                if shifted < -_SYMMETRY_TOL * max(1.0, margin):
                    raise WeightsError(
                        f"{name}_{k} - {margin:.3g} I is not positive semidefinite",
                        details={"weights": f"{name}_{k}", "margin": margin},
                    )
        return self

    @property
    def hbar(self) -> int:
        return len(self.Q)

    def check(self, system: ImpulseSystem) -> None:
        """Raise DimensionMismatchError unless the weights fit the system."""
        if self.hbar != system.hbar:
            raise DimensionMismatchError("weights period", system.hbar, self.hbar)
        d, m = system.state_dim, system.input_dim
        for k, (Q, R) in enumerate(zip(self.Q, self.R, strict=True), start=1):
            if Q.shape != (d, d):
                raise DimensionMismatchError(f"Q_{k}", (d, d), Q.shape)
            if R.shape != (m, m):
                raise DimensionMismatchError(f"R_{k}", (m, m), R.shape)

    def scaled(self, alpha: float) -> "CostWeights":
        return CostWeights(
            Q=[alpha * Q for Q in self.Q],
            R=[alpha * R for R in self.R],
            q_margin=alpha * self.q_margin,
            r_margin=alpha * self.r_margin,
        )

    @classmethod
    def scalar(cls, system: ImpulseSystem, q: float = 1.0, r: float = 1.0) -> "CostWeights":
        """Weights q*I and r*I on every slot."""
        d, m = system.state_dim, system.input_dim
        return cls(
            Q=[q * np.eye(d) for _ in range(system.hbar)],
            R=[r * np.eye(m) for _ in range(system.hbar)],
        )

    @classmethod
    def identity(cls, system: ImpulseSystem) -> "CostWeights":
        return cls.scalar(system)


class TerminalWeight(ImpulseModel):
    """Terminal weight M of a finite-horizon problem (symmetric PSD)."""

    M: Matrix = Field(description="Symmetric positive semidefinite terminal weight")

    @model_validator(mode="after")
    def _check_psd(self) -> "TerminalWeight":
        _check_symmetric("M", self.M)
        scale = max(1.0, float(np.abs(self.M).max(initial=0.0)))
        if _min_eig(self.M) < -_SYMMETRY_TOL * scale:
            raise WeightsError("terminal weight M is not positive semidefinite")
        return self

    @classmethod
    def zero(cls, d: int) -> "TerminalWeight":
        return cls(M=np.zeros((d, d)))


class RiccatiSolution(ImpulseModel):
    """Periodic solution P_0..P_hbar of the Riccati-type equation.

    Only P_0..P_{hbar-1} are stored; P_hbar is the same array as P_0.
    """

    anchors: list[Matrix] = Field(description="P_0..P_{hbar-1}")
    residual: float = Field(ge=0.0, description="Max operator-norm defect of the periodic equation")
    iterations: int = Field(ge=0, description="Whole periods of value iteration used")
    converged: bool = Field(default=True)

    @property
    def hbar(self) -> int:
        return len(self.anchors)

    @property
    def P(self) -> list[np.ndarray]:
        """P_0..P_hbar with P_hbar aliasing P_0."""
        return [*self.anchors, self.anchors[0]]

    def at(self, k: int) -> np.ndarray:
        """P_k for any k >= 0, extended periodically."""
        return self.anchors[k % self.hbar]

    def value(self, x0: np.ndarray) -> float:
        """Infinite-horizon value <P_0 x0, x0>."""
        x = np.asarray(x0, dtype=float)
        return float(x @ self.anchors[0] @ x)


class NotStabilizable(Verdict):
    """Value iteration diverged: no periodic feedback stabilizes the system."""

    periods: int = Field(description="Periods iterated before the verdict")
    growth_rate: float = Field(description="Mean log-growth of ||P|| per period over the window")
    last_norm: float = Field(description="Operator norm of the last period-anchored iterate")
    reason: str = Field(description="'divergence-cap' or 'monotone-growth'")


class CostInterval(ImpulseModel):
    """Cost reported as an enclosing interval when a tail is only bounded."""

    lower: float = Field(ge=0.0)
    upper: float = Field(ge=0.0)
    steps: int = Field(description="Number of computed stages")

    @property
    def exact(self) -> bool:
        return self.lower == self.upper


class AdmissibilityReport(Verdict):
    """Numerical decision of whether sum ||x(t_j)||^2 is finite."""

    admissible: bool
    inconclusive: bool = False
    partial_sums: list[float] = Field(description="Partial sums of ||x(t_j)||^2")
    ratio: float = Field(description="Geometric ratio estimated from the last two periods")
    tail_estimate: float = Field(description="Estimated remainder of the state series")


class CompletionOfSquaresReport(ImpulseModel):
    """Terms of the identity J(u) = <P_0 x0, x0> + sum of squares + terminal term."""

    cost: float
    value: float
    squares: float
    terminal: float
    defect: float


class DynamicProgrammingReport(ImpulseModel):
    """Gap between the infinite-horizon value and its k-step decomposition."""

    gap: float = Field(description="Absolute gap at x0")
    value: float = Field(description="<P_0 x0, x0>")
    finite_value: float = Field(description="k-step value with terminal weight P_nu(k)")
    sampled_gap: float = Field(default=0.0, description="Max gap over random directions")
