"""Randomized agreement battery for the three stabilizability verdicts."""

import asyncio
import logging
import time

import numpy as np
from scipy.stats import ortho_group

from .exceptions import InvalidParameterError, StabilizationError, VerdictDisagreementError
from .models.battery import VERDICTS, BatteryInstance, BatteryReport, InstanceVerdicts, Stratum
from .models.riccati import RiccatiSolution
from .models.run import BatterySpec
from .models.system import FeedbackLaw, ImpulseSystem, PeriodicSchedule
from .stabilizer import Stabilizer

logger = logging.getLogger(__name__)

SIGMA = 0.5
EPS = 1e-6

# Scales of the random gains tried by the coarse gain search
_GAIN_SCALES = (0.1, 0.3, 1.0, 3.0, 10.0)
_GAIN_DRAWS = 16

# Per-period contraction of the uncontrolled block
_STABLE_PRODUCT = (0.1, 0.4)
_UNSTABLE_PRODUCT = (1.5, 3.0)


def _orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0 if rng.random() < 0.5 else -1.0]])
    return ortho_group.rvs(d, random_state=rng)


class VerdictBattery:
    """Generates random impulse systems and checks that the verdicts agree.

    Every instance is judged by value-iteration convergence with a
    synthesized feedback of monodromy radius below one, by the sufficient
    weak observability certificate for some K <= K_MAX, and by whether the
    concatenated steering control is certified admissible. A negative
    Riccati verdict is backed by a coarse gain search that must not find a
    stabilizing feedback.
    """

    def __init__(self, stabilizer: Stabilizer, spec: BatterySpec | None = None):
        self.stabilizer = stabilizer
        self.spec = spec or BatterySpec()
        if self.spec.d_max < self.spec.d_min:
            raise InvalidParameterError("d_max", self.spec.d_max, f">= d_min = {self.spec.d_min}")

    @property
    def settings(self):
        return self.stabilizer.settings

    def generate(self, index: int) -> BatteryInstance:
        """Deterministic instance number `index` for the stabilizer's seed."""
        spec = self.spec
        rng = np.random.default_rng((self.stabilizer.engine.seed, index))
        stratum: Stratum = spec.strata[index % len(spec.strata)]

        d = int(rng.integers(spec.d_min, spec.d_max + 1))
        m = int(rng.integers(1, spec.m_max + 1))
        hbar = int(rng.integers(1, spec.hbar_max + 1))
        schedule = PeriodicSchedule(times=np.cumsum(rng.uniform(0.5, 1.5, hbar)).tolist())

        if stratum == "controllable":
            flows = [rng.standard_normal((d, d)) * rng.uniform(0.5, 1.5) / np.sqrt(d) for _ in range(hbar)]
            inputs = [rng.standard_normal((d, m)) for _ in range(hbar)]
        else:
            flows, inputs = self._triangular(rng, stratum, d, m, hbar)

        x0 = rng.standard_normal(d)
        system = ImpulseSystem(schedule=schedule, flows=flows, inputs=inputs)
        return BatteryInstance(index=index, stratum=stratum, system=system, x0=x0 / np.linalg.norm(x0))

    @staticmethod
    def _triangular(
        rng: np.random.Generator, stratum: Stratum, d: int, m: int, hbar: int
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Rotated [[A1, A2], [0, a_k Q_k]] flows with inputs [[B1], [0]].

        The product of the a_k over a period lies in the stratum's range and
        every Q_k is orthogonal, so the uncontrolled block scales all norms by
        exactly that product each period.
        """
        d1 = int(rng.integers(1, d)) if d > 1 else 0
        d3 = d - d1
        low, high = _STABLE_PRODUCT if stratum == "uncontrollable-stable" else _UNSTABLE_PRODUCT
        scale = rng.uniform(low, high) ** (1.0 / hbar)
        T = _orthogonal(rng, d)

        flows, inputs = [], []
        for _ in range(hbar):
            E = np.zeros((d, d))
            E[:d1, :d1] = rng.standard_normal((d1, d1)) / np.sqrt(max(d1, 1))
            E[:d1, d1:] = rng.standard_normal((d1, d3))
            E[d1:, d1:] = scale * _orthogonal(rng, d3)
            B = np.zeros((d, m))
            B[:d1] = rng.standard_normal((d1, m))
            flows.append(T @ E @ T.T)
            inputs.append(T @ B)
        return flows, inputs

    def evaluate(self, instance: BatteryInstance) -> InstanceVerdicts:
        """Run the three verdicts on one instance."""
        stab = self.stabilizer
        system = instance.system
        errors: dict[str, str] = {}

        riccati, radius = False, None
        try:
            solution, feedback = stab.synthesize(system)
            if feedback is not None:
                radius = stab.dynamics.spectral_radius(stab.dynamics.monodromy(system, feedback))
            converged = isinstance(solution, RiccatiSolution) and solution.converged
            riccati = converged and radius is not None and radius < 1.0
            if converged and not riccati:
                errors["riccati"] = f"converged but the synthesized feedback has radius {radius:.6f}"
        except StabilizationError as e:
            errors["riccati"] = e.message

        search_radius = None if riccati else self._gain_search(instance)

        K, C = None, None
        for periods in range(1, self.settings.K_MAX + 1):
            pair = stab.observability.build_observability_pair(system, periods * system.hbar, "exclusive")
            report = stab.observability.weak_obs_minimal_C(pair, SIGMA, "sufficient")
            if report.feasible:
                K, C = periods, report.C
                break

        concatenation = False
        try:
            report = stab.observability.concatenated_stabilizing_control(
                system, instance.x0, K or self.settings.K_MAX, SIGMA, EPS, C=C
            )
            concatenation = report.certified
        except StabilizationError as e:
            errors["concatenation"] = e.message

        verdicts = InstanceVerdicts(
            instance=instance,
            riccati=riccati,
            weak_obs=K is not None,
            concatenation=concatenation,
            K=K,
            C=C,
            spectral_radius=radius,
            gain_search_radius=search_radius,
            errors=errors,
        )
        if not verdicts.agree:
            logger.warning(
                f"Instance {instance.index} ({instance.stratum}) disagrees: "
                f"riccati={riccati} weak_obs={verdicts.weak_obs} concatenation={concatenation} "
                f"gain_search_radius={search_radius}"
            )
        return verdicts

    def _gain_search(self, instance: BatteryInstance) -> float:
        """Smallest monodromy radius over a coarse set of periodic gains.

        Tries zero gains, the least-squares one-step cancellations
        F_k = -s pinv(B_k), and random gains at several scales.
        """
        dynamics = self.stabilizer.dynamics
        system = instance.system
        rng = np.random.default_rng((self.stabilizer.engine.seed, instance.index, 1))
        shape = (system.input_dim, system.state_dim)

        candidates = [FeedbackLaw.zero(system)]
        for s in (0.5, 1.0):
            gains = [-s * np.linalg.pinv(B) for B in system.inputs]
            candidates.append(FeedbackLaw(gains=gains))
        for scale in _GAIN_SCALES:
            for _ in range(_GAIN_DRAWS):
                candidates.append(
                    FeedbackLaw(gains=[scale * rng.standard_normal(shape) for _ in range(system.hbar)])
                )

        best = min(dynamics.spectral_radius(dynamics.monodromy(system, F)) for F in candidates)
        logger.debug(f"Gain search over {len(candidates)} feedbacks on instance {instance.index}: {best:.6f}")
        return best

    async def run_async(self) -> BatteryReport:
        """Evaluate all instances on worker threads, results in index order."""
        semaphore = asyncio.Semaphore(self.settings.BATTERY_WORKERS)

        async def run_one(index: int) -> InstanceVerdicts:
            async with semaphore:
                instance = self.generate(index)
                return await asyncio.to_thread(self.evaluate, instance)

        results = await asyncio.gather(*(run_one(index) for index in range(self.spec.count)))
        return BatteryReport(results=list(results), agreement=self._agreement(results))

    def run(self, strict: bool = False) -> BatteryReport:
        """Run the battery.

        Args:
            strict: Raise when any instance disagrees instead of only reporting it

        Raises:
            VerdictDisagreementError: If strict and any instance disagrees
        """
        start = time.perf_counter()
        report = asyncio.run(self.run_async())
        logger.info(
            f"Battery of {report.count} instances finished in {time.perf_counter() - start:.1f}s, "
            f"{len(report.failures)} disagreements"
        )
        if strict and not report.all_agree:
            raise VerdictDisagreementError(
                f"{len(report.failures)} of {report.count} instances disagree",
                details={"failures": [failure.model_dump(mode="json") for failure in report.failures]},
            )
        return report

    @staticmethod
    def _agreement(results: list[InstanceVerdicts]) -> dict[str, dict[str, int]]:
        """Counts of instances on which each pair of verdicts coincides."""
        return {
            a: {b: sum(getattr(r, a) == getattr(r, b) for r in results) for b in VERDICTS}
            for a in VERDICTS
        }
