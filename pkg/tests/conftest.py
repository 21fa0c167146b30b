import numpy as np
import pytest

from impulse_stab import ImpulseSystem, PeriodicSchedule, Settings, Stabilizer

GOLDEN_RATIO = (1 + np.sqrt(5)) / 2


def scalar_system(E: float, B: float, times: list[float] | None = None) -> ImpulseSystem:
    """Scalar system with the same flow and input on every slot."""
    times = times or [1.0]
    return ImpulseSystem(
        schedule=PeriodicSchedule(times=times),
        flows=[[[E]] for _ in times],
        inputs=[[[B]] for _ in times],
    )


def random_system(seed: int, d: int = 3, m: int = 1, hbar: int = 2) -> ImpulseSystem:
    rng = np.random.default_rng(seed)
    return ImpulseSystem(
        schedule=PeriodicSchedule(times=np.cumsum(rng.uniform(0.5, 1.5, hbar)).tolist()),
        flows=[rng.standard_normal((d, d)) / np.sqrt(d) for _ in range(hbar)],
        inputs=[rng.standard_normal((d, m)) for _ in range(hbar)],
    )


@pytest.fixture(scope="session")
def stab() -> Stabilizer:
    return Stabilizer(settings=Settings(LOG_LEVEL="WARNING"))


@pytest.fixture
def golden() -> ImpulseSystem:
    """E = B = 1 with unit weights: P solves P^2 = P + 1."""
    return scalar_system(1.0, 1.0)


@pytest.fixture
def unstable() -> ImpulseSystem:
    """E = 2, B = 1: stabilizable, P = (7 + sqrt(65)) / 2."""
    return scalar_system(2.0, 1.0)


@pytest.fixture
def uncontrolled() -> ImpulseSystem:
    """E = 2, B = 0: not stabilizable."""
    return scalar_system(2.0, 0.0)
