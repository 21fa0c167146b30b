import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from impulse_stab import (
    ControlSequence,
    ConvergenceError,
    CostWeights,
    FeedbackLaw,
    ImpulseSystem,
    InvalidParameterError,
    NotStabilizable,
    PeriodicSchedule,
    RiccatiSolution,
    TerminalWeight,
)

from .conftest import GOLDEN_RATIO, random_system, scalar_system


def test_golden_ratio_solution(stab, golden):
    weights = CostWeights.identity(golden)
    solution = stab.riccati.periodic_riccati_solve(golden, weights)
    assert isinstance(solution, RiccatiSolution)
    assert solution.anchors[0][0, 0] == pytest.approx(GOLDEN_RATIO, abs=1e-9)
    assert solution.residual < 1e-9

    feedback = stab.riccati.synthesize_feedback(golden, weights, solution)
    assert feedback.gains[0][0, 0] == pytest.approx(-1 / GOLDEN_RATIO, abs=1e-6)
    phi = stab.dynamics.monodromy(golden, feedback)
    assert phi[0, 0] == pytest.approx(1 / GOLDEN_RATIO**2, abs=1e-6)


def test_unstable_scalar_solution(stab, unstable):
    solution, feedback = stab.synthesize(unstable)
    P = (7 + math.sqrt(65)) / 2
    assert solution.anchors[0][0, 0] == pytest.approx(P, rel=1e-9)
    radius = stab.dynamics.spectral_radius(stab.dynamics.monodromy(unstable, feedback))
    assert radius == pytest.approx(2 / (1 + P), rel=1e-6)


def test_uncontrolled_growth_hits_divergence_cap(stab, uncontrolled):
    verdict, feedback = stab.synthesize(uncontrolled)
    assert isinstance(verdict, NotStabilizable)
    assert feedback is None
    assert verdict.reason == "divergence-cap"
    assert verdict.growth_rate == pytest.approx(math.log(4.0), rel=2e-2)


def test_linear_growth_is_reported_as_monotone(stab):
    system = scalar_system(1.0, 0.0)
    verdict = stab.riccati.periodic_riccati_solve(system, CostWeights.identity(system), max_periods=50)
    assert isinstance(verdict, NotStabilizable)
    assert verdict.reason == "monotone-growth"
    assert verdict.periods == 50


def test_exhausted_budget_raises(stab, golden):
    with pytest.raises(ConvergenceError):
        stab.riccati.periodic_riccati_solve(golden, CostWeights.identity(golden), max_periods=1)


def test_periodic_solution_over_two_slots(stab):
    system = random_system(11, d=2, m=2, hbar=2)
    weights = CostWeights.identity(system)
    solution = stab.riccati.periodic_riccati_solve(system, weights)
    assert solution.hbar == 2
    assert solution.P[2] is solution.P[0]
    assert stab.riccati.riccati_residual(system, weights, solution) == pytest.approx(solution.residual)
    assert solution.residual < 1e-10 * max(1.0, np.linalg.norm(solution.anchors[0], 2))


def test_finite_horizon_single_step(stab, golden):
    Ps = stab.riccati.finite_horizon_riccati(
        golden, CostWeights.identity(golden), TerminalWeight.zero(1), khat=1
    )
    assert Ps[0][0, 0] == pytest.approx(1.0)
    assert Ps[1][0, 0] == 0.0
    with pytest.raises(InvalidParameterError):
        stab.riccati.finite_horizon_riccati(golden, CostWeights.identity(golden), TerminalWeight.zero(1), 0)


def test_finite_horizon_optimal_cost_equals_value(stab):
    system = random_system(5, d=3, m=1, hbar=2)
    weights = CostWeights.identity(system)
    terminal = TerminalWeight(M=np.diag([1.0, 0.5, 0.0]))
    x0 = np.array([1.0, -1.0, 0.5])
    khat = 6

    Ps = stab.riccati.finite_horizon_riccati(system, weights, terminal, khat)
    v = stab.riccati.finite_horizon_optimal_control(system, weights, Ps, x0, 0, khat)
    cost = stab.riccati.finite_horizon_cost(system, weights, terminal, x0, v, 0, khat)
    assert cost == pytest.approx(stab.riccati.finite_horizon_value(Ps[0], x0), rel=1e-9)

    perturbed = ControlSequence(values=v.values + 0.05)
    assert stab.riccati.finite_horizon_cost(system, weights, terminal, x0, perturbed, 0, khat) > cost


def test_finite_horizon_from_later_start(stab):
    system = random_system(6, d=2, m=1, hbar=3)
    weights = CostWeights.identity(system)
    terminal = TerminalWeight.zero(2)
    x0 = np.array([0.3, 1.0])
    Ps = stab.riccati.finite_horizon_riccati(system, weights, terminal, 7)
    v = stab.riccati.finite_horizon_optimal_control(system, weights, Ps, x0, 2, 7)
    assert v.steps == 5
    cost = stab.riccati.finite_horizon_cost(system, weights, terminal, x0, v, 2, 7)
    assert cost == pytest.approx(stab.riccati.finite_horizon_value(Ps[2], x0), rel=1e-9)


def test_completion_of_squares(stab):
    system = random_system(8, d=2, m=2, hbar=2)
    weights = CostWeights.identity(system)
    solution = stab.riccati.periodic_riccati_solve(system, weights)
    u = ControlSequence(values=np.random.default_rng(3).standard_normal((5, 2)))
    report = stab.riccati.completion_of_squares_check(system, weights, solution, [1.0, 2.0], u, 5)
    assert report.defect == pytest.approx(0.0, abs=1e-7 * max(1.0, report.cost))
    assert report.squares > 0.0


def test_dynamic_programming_gap(stab, unstable):
    weights = CostWeights.identity(unstable)
    solution = stab.riccati.periodic_riccati_solve(unstable, weights)
    report = stab.riccati.dynamic_programming_check(unstable, weights, solution, [1.5], k=4, samples=5)
    assert report.gap == pytest.approx(0.0, abs=1e-7)
    assert report.sampled_gap == pytest.approx(0.0, abs=1e-7)
    assert report.value == pytest.approx(1.5**2 * solution.anchors[0][0, 0])


def test_lq_cost_of_free_decay(stab):
    system = scalar_system(0.5, 3.0)
    weights = CostWeights.identity(system)
    cost = stab.riccati.lq_cost(system, weights, [1.0], ControlSequence.zeros(1, 1))
    assert cost.lower == pytest.approx(1 / 3)
    assert cost.upper == pytest.approx(1 / 3)

    finite = stab.riccati.lq_cost(system, weights, [1.0], ControlSequence.zeros(2, 1), horizon=2)
    assert finite.exact
    assert finite.lower == pytest.approx(0.25 + 0.0625)


def test_lq_cost_tail_handling(stab):
    system = scalar_system(0.5, 1.0)
    weights = CostWeights.identity(system)
    unbounded = ControlSequence(values=[[0.0]], tail_norm=None)
    with pytest.raises(InvalidParameterError):
        stab.riccati.lq_cost(system, weights, [1.0], unbounded)

    tail = ControlSequence(values=[[0.0]], tail_norm=0.5)
    assert stab.riccati.lq_cost(system, weights, [1.0], tail).upper == math.inf
    bounded = stab.riccati.lq_cost(system, weights, [1.0], tail, state_tail=1.0)
    assert bounded.upper == pytest.approx(bounded.lower + 1.0 + 0.25)


def test_admissibility(stab):
    stable = scalar_system(0.5, 1.0)
    report = stab.riccati.is_admissible(stable, [1.0], ControlSequence.zeros(1, 1))
    assert report.admissible
    assert report.ratio == pytest.approx(0.25)
    assert report.partial_sums[-1] == pytest.approx(1 / 3)

    diverging = stab.riccati.is_admissible(scalar_system(2.0, 1.0), [1.0], ControlSequence.zeros(1, 1))
    assert not diverging.admissible
    assert not diverging.inconclusive

    unknown = stab.riccati.is_admissible(stable, [1.0], ControlSequence(values=[[1.0]], tail_norm=None))
    assert unknown.inconclusive


def test_feedback_controls_are_admissible(stab, unstable):
    solution, feedback = stab.synthesize(unstable)
    trajectory = stab.dynamics.simulate_closed_loop(unstable, feedback, [1.0], 60)
    u = stab.dynamics.feedback_controls(unstable, feedback, trajectory)
    report = stab.riccati.is_admissible(unstable, [1.0], u)
    assert report.admissible
    cost = stab.riccati.lq_cost(unstable, CostWeights.identity(unstable), [1.0], u)
    assert cost.upper == pytest.approx(solution.value([1.0]), rel=1e-8)


flows = arrays(np.float64, (2, 2), elements=st.floats(-2.0, 2.0, allow_nan=False))


@settings(max_examples=20, deadline=None)
@given(E=flows)
def test_fully_actuated_systems_are_stabilized(stab, E):
    system = ImpulseSystem(schedule=PeriodicSchedule(times=[1.0]), flows=[E], inputs=[np.eye(2)])
    weights = CostWeights.identity(system)
    solution = stab.riccati.periodic_riccati_solve(system, weights)
    assert isinstance(solution, RiccatiSolution)
    assert np.linalg.eigvalsh(solution.anchors[0]).min() >= -1e-10
    assert solution.residual <= 1e-10 * max(1.0, np.linalg.norm(solution.anchors[0], 2))

    feedback = stab.riccati.synthesize_feedback(system, weights, solution)
    assert stab.dynamics.spectral_radius(stab.dynamics.monodromy(system, feedback)) < 1.0


def actuated_system(seed: int, d: int = 2) -> ImpulseSystem:
    """Two slots, the first fully actuated, so every instance is stabilizable."""
    rng = np.random.default_rng(seed)
    return ImpulseSystem(
        schedule=PeriodicSchedule(times=[0.5, 1.0]),
        flows=[rng.standard_normal((d, d)) for _ in range(2)],
        inputs=[np.eye(d), rng.standard_normal((d, d))],
    )


def _stacked_maps(system: ImpulseSystem, khat: int) -> tuple[np.ndarray, np.ndarray]:
    """Pre-impulse states x(t_1..t_khat) = X0 x0 + X u for stacked controls u."""
    d, m = system.state_dim, system.input_dim
    X0 = np.zeros((khat * d, d))
    X = np.zeros((khat * d, khat * m))
    for j in range(1, khat + 1):
        rows = slice((j - 1) * d, j * d)
        free = np.eye(d)
        for i in range(j, 0, -1):
            free = free @ system.flow(i)
            if i > 1:
                X[rows, (i - 2) * m : (i - 1) * m] = free @ system.input(i - 1)
        X0[rows] = free
    return X0, X


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 3), khat=st.integers(1, 4))
def test_finite_horizon_value_matches_direct_minimization(stab, seed, d, khat):
    system = random_system(seed, d=d, m=1, hbar=2)
    weights = CostWeights.identity(system)
    x0 = np.random.default_rng(seed).standard_normal(d)

    Ps = stab.riccati.finite_horizon_riccati(system, weights, TerminalWeight.zero(d), khat)
    X0, X = _stacked_maps(system, khat)
    free = X0 @ x0
    u = -np.linalg.solve(X.T @ X + np.eye(X.shape[1]), X.T @ free)
    direct = float(np.sum((free + X @ u) ** 2) + np.sum(u**2))
    assert stab.riccati.finite_horizon_value(Ps[0], x0) == pytest.approx(direct, rel=1e-7, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), horizon=st.integers(1, 8))
def test_completion_of_squares_on_random_triples(stab, seed, horizon):
    system = actuated_system(seed)
    rng = np.random.default_rng(seed + 1)
    weights = CostWeights.identity(system)
    solution = stab.riccati.periodic_riccati_solve(system, weights)
    u = ControlSequence(values=rng.standard_normal((horizon, 2)))
    x0 = rng.standard_normal(2)
    report = stab.riccati.completion_of_squares_check(system, weights, solution, x0, u, horizon)
    assert report.defect < 1e-8 * (1 + report.cost + report.terminal)


@pytest.mark.parametrize("seed", range(20))
def test_weight_scaling_keeps_gains(stab, seed):
    system = actuated_system(seed, d=2 + seed % 2)
    base = CostWeights.identity(system)
    solution, feedback = stab.synthesize(system, base)

    for alpha in (0.1, 10.0):
        scaled, scaled_feedback = stab.synthesize(system, base.scaled(alpha))
        for F, G in zip(feedback.gains, scaled_feedback.gains, strict=True):
            np.testing.assert_allclose(G, F, rtol=1e-9, atol=1e-10)
        for P, Q in zip(solution.anchors, scaled.anchors, strict=True):
            assert np.linalg.norm(Q - alpha * P, 2) <= 1e-8 * alpha * np.linalg.norm(P, 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 3))
def test_finite_horizon_value_grows_with_horizon(stab, seed, d):
    system = random_system(seed, d=d, m=1, hbar=2)
    weights = CostWeights.identity(system)
    x0 = np.random.default_rng(seed).standard_normal(d)

    values = [
        stab.riccati.finite_horizon_value(
            stab.riccati.finite_horizon_riccati(system, weights, TerminalWeight.zero(d), khat)[0], x0
        )
        for khat in range(1, 11)
    ]
    for shorter, longer in zip(values, values[1:], strict=False):
        assert longer >= shorter - 1e-10 * max(1.0, shorter)


def test_feedback_beats_perturbed_gains(stab):
    system = actuated_system(3)
    weights = CostWeights.identity(system)
    solution, feedback = stab.synthesize(system, weights)
    rng = np.random.default_rng(11)
    x0 = np.array([1.0, -0.5])
    periods = 40

    def cost(gains: FeedbackLaw) -> float:
        """Stage cost over the horizon plus the optimal cost-to-go from the final state."""
        trajectory = stab.dynamics.simulate_closed_loop(system, gains, x0, periods)
        u = stab.dynamics.feedback_controls(system, gains, trajectory)
        stages = stab.riccati.lq_cost(system, weights, x0, u, horizon=trajectory.steps).lower
        return stages + solution.value(trajectory.post[-1])

    optimal = cost(feedback)
    assert optimal == pytest.approx(solution.value(x0), rel=1e-9)
    for _ in range(100):
        perturbed = FeedbackLaw(gains=[F + 0.1 * rng.standard_normal(F.shape) for F in feedback.gains])
        assert cost(perturbed) >= optimal * (1 - 1e-9)
