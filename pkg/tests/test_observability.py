import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_stab import ControlSequence, FeedbackLaw, InvalidParameterError, SteeringError

from .conftest import random_system, scalar_system

SIGMA = 0.5


@pytest.fixture
def pair(stab, unstable):
    """E = 2, B = 1 at K = 3 over 1..K-1: L = 8, G = (4, 2)^T."""
    return stab.observability.build_observability_pair(unstable, 3, "exclusive")


def test_pair_assembly(pair):
    assert pair.L[0, 0] == pytest.approx(8.0)
    np.testing.assert_allclose(pair.G, [[4.0], [2.0]])
    assert pair.n_blocks == 2
    np.testing.assert_allclose(pair.block(2), [[2.0]])


def test_full_range_adds_last_block(stab, unstable):
    pair = stab.observability.build_observability_pair(unstable, 3, "full")
    np.testing.assert_allclose(pair.G, [[4.0], [2.0], [1.0]])
    with pytest.raises(InvalidParameterError):
        stab.observability.build_observability_pair(unstable, 0)


def test_search_constant(stab, pair):
    report = stab.observability.weak_obs_minimal_C(pair, SIGMA, "search")
    assert report.feasible
    assert report.C == pytest.approx(7.5 / math.sqrt(20.0), rel=1e-6)
    assert report.observation_range == "exclusive"


def test_sufficient_constant_certifies(stab, pair):
    report = stab.observability.weak_obs_minimal_C(pair, SIGMA, "sufficient")
    assert report.feasible
    assert math.sqrt(63.75 / 20.0) <= report.C <= 1.8965
    assert stab.observability.weak_obs_holds(pair, SIGMA, report.C).holds


def test_holds_rejects_small_constant(stab, pair):
    decision = stab.observability.weak_obs_holds(pair, SIGMA, 1.6)
    assert not decision.holds
    assert decision.worst == pytest.approx(8.0 - 1.6 * math.sqrt(20.0) - SIGMA, rel=1e-6)
    assert stab.observability.weak_obs_holds(pair, SIGMA, 1.7).holds
    with pytest.raises(InvalidParameterError):
        stab.observability.weak_obs_holds(pair, SIGMA, -1.0)


def test_contracting_flow_needs_no_observation(stab):
    system = scalar_system(0.5, 1.0)
    pair = stab.observability.build_observability_pair(system, 1, "exclusive")
    assert pair.G.shape == (0, 1)
    for mode in ("search", "sufficient"):
        report = stab.observability.weak_obs_minimal_C(pair, 0.6, mode)
        assert report.feasible
        assert report.C == 0.0


def test_unobserved_growth_is_infeasible(stab, uncontrolled):
    pair = stab.observability.build_observability_pair(uncontrolled, 2, "full")
    for mode in ("search", "sufficient"):
        report = stab.observability.weak_obs_minimal_C(pair, SIGMA, mode)
        assert not report.feasible
        assert report.C is None
        assert report.diagnostics["null_gain"] == pytest.approx(4.0)


@pytest.mark.parametrize("sigma", [0.0, 1.0, -0.2])
def test_sigma_range(stab, pair, sigma):
    with pytest.raises(InvalidParameterError):
        stab.observability.weak_obs_minimal_C(pair, sigma)


def test_unknown_mode(stab, pair):
    with pytest.raises(InvalidParameterError):
        stab.observability.weak_obs_minimal_C(pair, SIGMA, "feedback")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(2, 4))
def test_sufficient_constant_bounds_search(stab, seed, K):
    system = random_system(seed, d=2, m=1, hbar=1)
    pair = stab.observability.build_observability_pair(system, K, "full")
    sufficient = stab.observability.weak_obs_minimal_C(pair, SIGMA, "sufficient")
    search = stab.observability.weak_obs_minimal_C(pair, SIGMA, "search")
    if sufficient.feasible:
        assert search.feasible
        assert search.C <= sufficient.C * (1 + 1e-6) + 1e-9


def test_holder_constants(stab, pair):
    assert stab.observability.holder_obs_check(pair, 1.0).C == pytest.approx(8.0 / 6.0, rel=1e-6)
    assert stab.observability.holder_obs_check(pair, 0.5).C == pytest.approx(8.0 / math.sqrt(6.0), rel=1e-6)
    best = stab.observability.holder_theta_scan(pair, [0.5, 1.0])
    assert best.theta == 1.0
    assert best.C == pytest.approx(8.0 / 6.0, rel=1e-6)
    with pytest.raises(InvalidParameterError):
        stab.observability.holder_obs_check(pair, 0.0)


def test_holder_infeasible_without_observation(stab, uncontrolled):
    pair = stab.observability.build_observability_pair(uncontrolled, 2, "full")
    report = stab.observability.holder_obs_check(pair, 1.0)
    assert not report.feasible


def test_feedback_certificate_and_transfer(stab, golden):
    _, feedback = stab.synthesize(golden)
    report = stab.observability.feedback_certificate(golden, feedback, SIGMA)
    assert report.feasible
    assert report.K == 1
    assert report.C == pytest.approx(1 / ((1 + math.sqrt(5)) / 2), abs=1e-6)

    moved = stab.observability.period_anchor_transfer(golden, report)
    assert moved.feasible
    assert moved.sigma == pytest.approx(SIGMA)
    assert moved.K == 2
    assert moved.observation_range == "exclusive"


def test_transfer_needs_feasible_report(stab, uncontrolled):
    pair = stab.observability.build_observability_pair(uncontrolled, 1)
    report = stab.observability.weak_obs_minimal_C(pair, SIGMA)
    with pytest.raises(InvalidParameterError):
        stab.observability.period_anchor_transfer(uncontrolled, report)


def test_feedback_certificate_without_contraction(stab, uncontrolled):
    report = stab.observability.feedback_certificate(
        uncontrolled, FeedbackLaw.zero(uncontrolled), SIGMA, max_steps=10
    )
    assert not report.feasible


@pytest.mark.parametrize(
    ("sigma", "phi", "u1"),
    [(0.1, -0.97499975, -1.9499995), (0.5, -0.87499975, -1.7499995)],
)
def test_steering_scalar(stab, unstable, sigma, phi, u1):
    result = stab.observability.steering_control(unstable, [1.0], K=2, sigma=sigma, eps=1e-6)
    assert result.phi_star[0] == pytest.approx(phi, rel=1e-7)
    assert result.u[1][0] == pytest.approx(u1, rel=1e-7)
    assert result.u[2][0] == 0.0
    assert result.achieved_norm == pytest.approx(sigma + 1e-6, rel=1e-7)
    assert result.control_norm <= 2 * result.C


def test_steering_zero_state(stab, unstable):
    result = stab.observability.steering_control(unstable, [0.0], K=2, sigma=SIGMA, eps=1e-6)
    assert result.control_norm == 0.0
    assert result.achieved_norm == 0.0


def test_steering_not_coercive(stab, uncontrolled):
    with pytest.raises(SteeringError):
        stab.observability.steering_control(uncontrolled, [1.0], K=1, sigma=SIGMA, eps=1e-6)


def test_steering_needs_observed_instants(stab, golden):
    with pytest.raises(SteeringError):
        stab.observability.steering_control(golden, [1.0], K=1, sigma=0.3, eps=1e-6)
    result = stab.observability.steering_control(golden, [1.0], K=2, sigma=0.3, eps=1e-6)
    assert result.achieved_norm == pytest.approx(0.3, rel=1e-4)


def test_steering_argument_checks(stab, unstable):
    with pytest.raises(InvalidParameterError):
        stab.observability.steering_control(unstable, [1.0], K=2, sigma=SIGMA, eps=0.0)


def test_concatenation_scalar(stab, unstable):
    report = stab.observability.concatenated_stabilizing_control(unstable, [1.0], K=2, sigma=0.1, eps=1e-6)
    assert report.ratio == pytest.approx(0.100001, rel=1e-5)
    assert len(report.block_norms) == 12
    assert report.u.steps == 22
    assert report.certified
    assert report.control_norm**2 <= report.control_bound
    assert all(b >= a for a, b in zip(report.partial_sums, report.partial_sums[1:], strict=False))
    assert report.increments[-1] < report.increments[0]
    assert report.increments[7] < 1e-10


def test_concatenation_golden(stab, golden):
    report = stab.observability.concatenated_stabilizing_control(golden, [1.0], K=2, sigma=0.3, eps=1e-6)
    assert report.ratio == pytest.approx(0.3, rel=1e-4)
    assert report.certified


def test_concatenation_from_rest(stab, unstable):
    report = stab.observability.concatenated_stabilizing_control(unstable, [0.0], K=2, sigma=SIGMA, eps=1e-6)
    assert report.certified
    assert report.block_norms == [0.0]
    assert report.u.steps == 0


def test_concatenation_rate_must_contract(stab, unstable):
    with pytest.raises(InvalidParameterError):
        stab.observability.concatenated_stabilizing_control(unstable, [1.0], K=2, sigma=0.9, eps=0.2)


def test_concatenation_on_random_system(stab):
    system = random_system(21, d=3, m=2, hbar=2)
    x0 = np.array([1.0, 0.0, -1.0])
    report = stab.observability.concatenated_stabilizing_control(system, x0, K=3, sigma=SIGMA, eps=1e-6)
    assert report.certified
    assert report.block_norms[-1] < 1e-10 * np.linalg.norm(x0)
    assert report.ratio <= SIGMA + 1e-3


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    m=st.integers(1, 2),
    K=st.integers(2, 5),
    observation_range=st.sampled_from(["exclusive", "full"]),
)
def test_observation_blocks_are_impulse_responses(stab, seed, m, K, observation_range):
    system = random_system(seed, d=3, m=m, hbar=2)
    pair = stab.observability.build_observability_pair(system, K, observation_range)
    rng = np.random.default_rng(seed + 1)
    phi = rng.standard_normal(3)

    x0 = rng.standard_normal(3)
    free = stab.dynamics.simulate_open_loop(system, x0, ControlSequence(values=np.zeros((K, m))), K)
    assert phi @ free.post[-1] == pytest.approx(phi @ pair.L @ x0, rel=1e-9, abs=1e-10)

    assert pair.n_blocks == (K if observation_range == "full" else K - 1)
    for j in range(1, pair.n_blocks + 1):
        v = rng.standard_normal(m)
        values = np.zeros((K, m))
        values[j - 1] = v
        response = stab.dynamics.simulate_open_loop(system, np.zeros(3), ControlSequence(values=values), K)
        assert phi @ response.post[-1] == pytest.approx((pair.block(j) @ phi) @ v, rel=1e-9, abs=1e-10)


def _steering_functional(pair, b: np.ndarray, c: float):
    def value(phi: np.ndarray) -> float:
        return 0.5 * float(np.sum((pair.G @ phi) ** 2)) + float(b @ phi) + c * float(np.linalg.norm(phi))

    return value


@pytest.mark.parametrize(
    ("system", "x0", "K", "sigma"),
    [
        (scalar_system(2.0, 1.0), [1.0], 2, 0.1),
        (random_system(21, d=3, m=2, hbar=2), [1.0, 0.0, -1.0], 3, 0.05),
        (random_system(21, d=3, m=2, hbar=2), [1.0, 0.0, -1.0], 3, SIGMA),
    ],
)
def test_steering_minimizer_satisfies_variational_inequality(stab, system, x0, K, sigma):
    eps = 1e-6
    x0 = np.asarray(x0)
    result = stab.observability.steering_control(system, x0, K=K, sigma=sigma, eps=eps)
    pair = stab.observability.build_observability_pair(system, K * system.hbar, "exclusive")
    scale = float(np.linalg.norm(x0))
    b, c = pair.L @ x0 / scale, sigma + eps / scale
    phi = result.phi_star
    functional = _steering_functional(pair, b, c)

    # <G phi*, G (psi - phi*)> + <b, psi - phi*> + c ||psi|| - c ||phi*|| >= 0 for all psi
    rng = np.random.default_rng(K)
    candidates = [np.zeros_like(phi), 2.0 * phi, 0.5 * phi]
    for r in (1e-3, 1e-1, 1.0, 10.0):
        candidates += [phi + r * rng.standard_normal(phi.shape) for _ in range(50)]
    for psi in candidates:
        step = psi - phi
        tol = 1e-6 * max(1.0, float(np.linalg.norm(b))) * (1.0 + float(np.linalg.norm(step)))
        inequality = (
            float((pair.G @ phi) @ (pair.G @ step))
            + float(b @ step)
            + c * (np.linalg.norm(psi) - np.linalg.norm(phi))
        )
        assert inequality >= -tol
        assert functional(psi) >= functional(phi) - tol

    if np.linalg.norm(b) > c:
        assert np.linalg.norm(phi) > 0.0
        assert result.achieved_norm == pytest.approx(sigma * scale + eps, rel=1e-4)
    else:
        assert not np.any(phi)
