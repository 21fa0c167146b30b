"""Randomized verdict battery models."""

from typing import Literal

from pydantic import Field, computed_field

from .base import ImpulseModel, Vector
from .system import ImpulseSystem

Stratum = Literal["controllable", "uncontrollable-stable", "uncontrollable-unstable"]

VERDICTS = ("riccati", "weak_obs", "concatenation")


class BatteryInstance(ImpulseModel):
    """A generated system together with the initial state used for steering."""

    index: int
    stratum: Stratum
    system: ImpulseSystem
    x0: Vector


class InstanceVerdicts(ImpulseModel):
    """The three stabilizability verdicts of one instance."""

    instance: BatteryInstance
    riccati: bool = Field(description="Value iteration converged and its feedback has radius < 1")
    weak_obs: bool = Field(description="Sufficient-mode certificate found for some K <= K_max")
    concatenation: bool = Field(description="Concatenated control certified admissible")
    K: int | None = Field(default=None, description="Periods of the first certified horizon")
    C: float | None = None
    spectral_radius: float | None = Field(
        default=None, description="Monodromy radius of the synthesized feedback"
    )
    gain_search_radius: float | None = Field(
        default=None, description="Smallest radius found by the coarse gain search when riccati is False"
    )
    errors: dict[str, str] = Field(default_factory=dict)

    @computed_field
    @property
    def agree(self) -> bool:
        if self.gain_search_radius is not None and self.gain_search_radius < 1.0:
            return False
        return self.riccati == self.weak_obs == self.concatenation


class BatteryReport(ImpulseModel):
    """Per-instance verdicts and the pairwise agreement matrix."""

    results: list[InstanceVerdicts]
    agreement: dict[str, dict[str, int]]

    @property
    def count(self) -> int:
        return len(self.results)

    @property
    def all_agree(self) -> bool:
        return all(result.agree for result in self.results)

    @property
    def failures(self) -> list[InstanceVerdicts]:
        return [result for result in self.results if not result.agree]
