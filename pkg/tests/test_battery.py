import numpy as np
import pytest

from impulse_stab import (
    CostWeights,
    FeedbackLaw,
    InvalidParameterError,
    NotStabilizable,
    Stabilizer,
    VerdictBattery,
)
from impulse_stab.battery import EPS, SIGMA
from impulse_stab.models import BatteryInstance
from impulse_stab.models.run import BatterySpec

from .conftest import scalar_system


@pytest.fixture
def battery(stab) -> VerdictBattery:
    return VerdictBattery(stab, BatterySpec(count=3, d_max=3))


def test_generation_is_deterministic(battery):
    first, second = battery.generate(5), battery.generate(5)
    assert first.stratum == second.stratum
    for a, b in zip(first.system.flows, second.system.flows, strict=True):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(first.x0, second.x0)
    assert np.linalg.norm(first.x0) == pytest.approx(1.0)


def test_strata_cycle_with_index(battery):
    strata = [battery.generate(index).stratum for index in range(6)]
    assert strata == battery.spec.strata * 2


def test_dimensions_stay_in_range(battery):
    for index in range(9):
        system = battery.generate(index).system
        assert 1 <= system.state_dim <= 3
        assert 1 <= system.input_dim <= battery.spec.m_max
        assert 1 <= system.hbar <= battery.spec.hbar_max


def test_uncontrollable_unstable_instances_fail_every_verdict(stab):
    battery = VerdictBattery(stab, BatterySpec(count=2, strata=["uncontrollable-unstable"]))
    report = battery.run()
    assert report.all_agree
    for result in report.results:
        assert (result.riccati, result.weak_obs, result.concatenation) == (False, False, False)
        assert result.K is None


def test_verdicts_agree_on_every_stratum(battery):
    report = battery.run()
    assert report.count == 3
    assert report.all_agree, [failure.model_dump(mode="json") for failure in report.failures]
    assert [result.instance.index for result in report.results] == [0, 1, 2]
    assert report.results[0].riccati
    assert report.agreement["riccati"]["weak_obs"] == 3


def test_empty_battery(stab):
    report = VerdictBattery(stab, BatterySpec(count=0)).run(strict=True)
    assert report.count == 0
    assert report.all_agree
    assert report.agreement["riccati"]["concatenation"] == 0


def test_dimension_range_is_checked(stab):
    with pytest.raises(InvalidParameterError):
        VerdictBattery(stab, BatterySpec(d_min=3, d_max=2))


def test_instances_replay_from_json(battery):
    instance = battery.generate(2)
    replayed = BatteryInstance.model_validate(instance.model_dump(mode="json"))
    for a, b in zip(instance.system.flows, replayed.system.flows, strict=True):
        np.testing.assert_array_equal(a, b)
    original, again = battery.evaluate(instance), battery.evaluate(replayed)
    assert (original.riccati, original.weak_obs) == (again.riccati, again.weak_obs)
    assert original.agree == again.agree


def test_sixty_instances_agree_and_steer_within_bounds(stab):
    battery = VerdictBattery(stab, BatterySpec(count=60))
    report = battery.run(strict=True)
    assert report.count == 60
    assert {result.instance.stratum for result in report.results} == set(battery.spec.strata)

    for result in report.results:
        if result.riccati:
            assert result.spectral_radius < 1.0
            assert result.gain_search_radius is None
        else:
            assert result.gain_search_radius >= 1.0
        if not result.weak_obs:
            continue
        instance = result.instance
        steering = stab.observability.steering_control(
            instance.system, instance.x0, result.K, SIGMA, EPS, result.C
        )
        assert steering.achieved_norm <= SIGMA + EPS + 1e-8
        assert steering.control_norm <= 2 * result.C + 1e-8


def test_gain_search_cannot_stabilize_unstable_instances(stab):
    battery = VerdictBattery(stab, BatterySpec(count=2, strata=["uncontrollable-unstable"]))
    for result in battery.run().results:
        assert result.gain_search_radius >= 1.5 * (1 - 1e-9)


def _scalar_instance(E: float, B: float) -> BatteryInstance:
    return BatteryInstance(index=0, stratum="controllable", system=scalar_system(E, B), x0=[1.0])


def test_non_stabilizing_feedback_breaks_agreement(stab, battery, monkeypatch):
    original = Stabilizer.synthesize

    def zero_gains(self, system, weights=None, **kwargs):
        solution, _ = original(self, system, weights, **kwargs)
        return solution, FeedbackLaw.zero(system)

    monkeypatch.setattr(Stabilizer, "synthesize", zero_gains)
    result = battery.evaluate(_scalar_instance(2.0, 1.0))
    assert result.spectral_radius == pytest.approx(2.0)
    assert not result.riccati
    assert "radius" in result.errors["riccati"]
    assert result.gain_search_radius == pytest.approx(0.0, abs=1e-12)
    assert not result.agree


def test_false_negative_riccati_is_caught_by_gain_search(stab, battery, monkeypatch):
    uncontrolled = scalar_system(2.0, 0.0)
    verdict = stab.riccati.periodic_riccati_solve(uncontrolled, CostWeights.identity(uncontrolled))
    assert isinstance(verdict, NotStabilizable)
    monkeypatch.setattr(Stabilizer, "synthesize", lambda self, system, *args, **kwargs: (verdict, None))

    result = battery.evaluate(_scalar_instance(2.0, 1.0))
    assert not result.riccati
    assert result.weak_obs and result.concatenation
    assert result.gain_search_radius < 1.0
    assert not result.agree
