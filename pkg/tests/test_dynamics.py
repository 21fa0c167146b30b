import math

import numpy as np
import pytest

from impulse_stab import (
    ControlSequence,
    DimensionMismatchError,
    FeedbackLaw,
    InvalidParameterError,
    Trajectory,
)

from .conftest import random_system, scalar_system


def test_open_loop_scalar(stab):
    system = scalar_system(2.0, 1.0)
    u = ControlSequence(values=[[-1.0], [0.5]])
    trajectory = stab.dynamics.simulate_open_loop(system, [1.0], u, 2)
    assert trajectory.pre[:, 0] == pytest.approx([2.0, 2.0])
    assert trajectory.post[:, 0] == pytest.approx([1.0, 2.5])
    assert trajectory.times == pytest.approx([1.0, 2.0])


def test_open_loop_needs_zero_tail_beyond_prefix(stab):
    system = scalar_system(0.5, 1.0)
    short = ControlSequence(values=[[0.0]], tail_norm=0.1)
    with pytest.raises(InvalidParameterError):
        stab.dynamics.simulate_open_loop(system, [1.0], short, 3)

    trajectory = stab.dynamics.simulate_open_loop(system, [1.0], ControlSequence.zeros(1, 1), 3)
    assert trajectory.norms_post == pytest.approx([0.5, 0.25, 0.125])


def test_open_loop_dimension_errors(stab):
    system = random_system(0, d=3, m=2)
    with pytest.raises(DimensionMismatchError):
        stab.dynamics.simulate_open_loop(system, np.ones(2), ControlSequence.zeros(2, 2), 2)
    with pytest.raises(DimensionMismatchError):
        stab.dynamics.simulate_open_loop(system, np.ones(3), ControlSequence.zeros(2, 1), 2)


def test_closed_loop_matches_open_loop_with_realized_controls(stab):
    system = random_system(1, d=3, m=2, hbar=3)
    rng = np.random.default_rng(7)
    feedback = FeedbackLaw(gains=[rng.standard_normal((2, 3)) * 0.3 for _ in range(3)])
    x0 = rng.standard_normal(3)

    closed = stab.dynamics.simulate_closed_loop(system, feedback, x0, periods=4)
    u = stab.dynamics.feedback_controls(system, feedback, closed)
    opened = stab.dynamics.simulate_open_loop(system, x0, u, closed.steps)

    np.testing.assert_allclose(opened.pre, closed.pre, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(opened.post, closed.post, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("periods", [1, 2, 5])
def test_monodromy_powers_reproduce_closed_loop(stab, periods):
    system = random_system(2, d=2, m=1, hbar=2)
    feedback = FeedbackLaw(gains=[np.array([[0.2, -0.1]]), np.array([[-0.3, 0.4]])])
    x0 = np.array([1.0, -2.0])

    phi = stab.dynamics.monodromy(system, feedback)
    trajectory = stab.dynamics.simulate_closed_loop(system, feedback, x0, periods)
    expected = np.linalg.matrix_power(phi, periods) @ x0
    np.testing.assert_allclose(trajectory.post[-1], expected, rtol=1e-10, atol=1e-12)


def test_transition_composes(stab):
    system = random_system(3, d=2, m=1, hbar=2)
    feedback = FeedbackLaw(gains=[np.array([[0.1, 0.2]]), np.array([[0.0, -0.5]])])
    whole = stab.dynamics.transition(system, feedback, 0, 5)
    head = stab.dynamics.transition(system, feedback, 0, 2)
    split = stab.dynamics.transition(system, feedback, 2, 5) @ head
    np.testing.assert_allclose(whole, split, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(stab.dynamics.transition(system, feedback, 3, 3), np.eye(2))
    with pytest.raises(InvalidParameterError):
        stab.dynamics.transition(system, feedback, 3, 1)


def test_feedback_shape_is_checked(stab):
    system = random_system(4, d=2, m=1, hbar=2)
    with pytest.raises(DimensionMismatchError):
        stab.dynamics.monodromy(system, FeedbackLaw(gains=[np.zeros((1, 2))]))


def test_spectral_radius(stab):
    assert stab.dynamics.spectral_radius([[0.0, 2.0], [-2.0, 0.0]]) == pytest.approx(2.0)
    assert stab.dynamics.spectral_radius(0.5) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatchError):
        stab.dynamics.spectral_radius(np.ones((2, 3)))


def test_decay_fit_of_halving_trajectory(stab):
    system = scalar_system(0.5, 0.0)
    trajectory = stab.dynamics.simulate_closed_loop(system, FeedbackLaw.zero(system), [1.0], 10)
    fit = stab.dynamics.decay_rate_fit(trajectory)
    assert fit.mu == pytest.approx(math.log(2.0))
    assert fit.C == pytest.approx(1.0)
    assert fit.stable
    assert fit.samples == 10


def test_decay_fit_flags_growth(stab):
    system = scalar_system(2.0, 0.0)
    trajectory = stab.dynamics.simulate_closed_loop(system, FeedbackLaw.zero(system), [1.0], 5)
    fit = stab.dynamics.decay_rate_fit(trajectory)
    assert fit.mu == pytest.approx(-math.log(2.0))
    assert not fit.stable


def test_decay_fit_of_vanishing_trajectory(stab):
    system = scalar_system(1.0, 1.0)
    deadbeat = FeedbackLaw(gains=[[[-1.0]]])
    trajectory = stab.dynamics.simulate_closed_loop(system, deadbeat, [3.0], 4)
    assert trajectory.norms_post == [0.0] * 4
    assert stab.dynamics.decay_rate_fit(trajectory).mu == math.inf


def test_decay_fit_needs_three_samples(stab):
    trajectory = Trajectory(x0=[1.0], times=[1.0, 2.0], pre=[[0.5], [0.25]], post=[[0.5], [0.25]])
    with pytest.raises(InvalidParameterError):
        stab.dynamics.decay_rate_fit(trajectory)


def test_continuous_envelope(stab):
    system = scalar_system(0.5, 0.0, times=[1.0, 2.0])
    trajectory = stab.dynamics.simulate_closed_loop(system, FeedbackLaw.zero(system), [2.0], 1)
    envelope = stab.dynamics.continuous_envelope(system, trajectory, [1.0, 1.5])
    assert envelope == pytest.approx([2.0, 1.5])
    with pytest.raises(DimensionMismatchError):
        stab.dynamics.continuous_envelope(system, trajectory, [1.0])
