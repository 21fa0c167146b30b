"""Open and closed loop simulation, monodromy and decay measurement."""

import logging

import numpy as np
from scipy.sparse.linalg import eigs

from ..exceptions import DimensionMismatchError, InvalidParameterError
from ..models.system import (
    ControlSequence,
    DecayFit,
    FeedbackLaw,
    ImpulseSystem,
    PeriodicSchedule,
    Trajectory,
    extend_schedule,
    nu,
)
from .base import BaseSolver

logger = logging.getLogger(__name__)

# Above this dimension the spectral radius comes from an Arnoldi iteration.
_DENSE_EIG_LIMIT = 400


class DynamicsSolver(BaseSolver):
    """Simulation of impulse systems at the impulse instants."""

    def nu(self, j: int, hbar: int) -> int:
        return nu(j, hbar)

    def extend_schedule(self, schedule: PeriodicSchedule, j: int) -> float:
        return extend_schedule(schedule, j)

    def simulate_open_loop(
        self, system: ImpulseSystem, x0, u: ControlSequence, steps: int
    ) -> Trajectory:
        """Simulate x(t_j) = E_nu(j) x(t_{j-1}+), x(t_j+) = x(t_j) + B_nu(j) u_j.

        Args:
            system: Impulse system
            x0: Initial state
            u: Control sequence; rows beyond its prefix count as zero only if its tail is zero
            steps: Number of impulses to simulate

        Returns:
            Pre- and post-impulse samples

        Raises:
            DimensionMismatchError: On inconsistent dimensions
            InvalidParameterError: If steps exceeds the available control
        """
        x = self._state(system, x0)
        if u.input_dim != system.input_dim:
            raise DimensionMismatchError("control", system.input_dim, u.input_dim)
        if steps < 1:
            raise InvalidParameterError("steps", steps, ">= 1")
        if steps > u.steps and u.tail_norm != 0.0:
            raise InvalidParameterError("steps", steps, f"<= {u.steps} available controls")

        pre = np.empty((steps, system.state_dim))
        post = np.empty((steps, system.state_dim))
        state = x
        for j in range(1, steps + 1):
            state = system.flow(j) @ state
            pre[j - 1] = state
            state = state + system.input(j) @ u[j]
            post[j - 1] = state

        times = [system.schedule.instant(j) for j in range(1, steps + 1)]
        return Trajectory(x0=x, times=times, pre=pre, post=post)

    def simulate_closed_loop(
        self, system: ImpulseSystem, feedback: FeedbackLaw, x0, periods: int
    ) -> Trajectory:
        """Simulate the closed loop x(t_j+) = (I + B_nu(j) F_nu(j)) x(t_j) over whole periods."""
        feedback.check(system)
        if periods < 1:
            raise InvalidParameterError("periods", periods, ">= 1")
        x = self._state(system, x0)
        steps = periods * system.hbar

        pre = np.empty((steps, system.state_dim))
        post = np.empty((steps, system.state_dim))
        state = x
        for j in range(1, steps + 1):
            state = system.flow(j) @ state
            pre[j - 1] = state
            gain = feedback.gains[system.schedule.nu(j) - 1]
            state = state + system.input(j) @ (gain @ state)
            post[j - 1] = state

        times = [system.schedule.instant(j) for j in range(1, steps + 1)]
        logger.debug(f"Simulated {periods} closed-loop periods, final norm {np.linalg.norm(state):.3e}")
        return Trajectory(x0=x, times=times, pre=pre, post=post)

    def feedback_controls(
        self, system: ImpulseSystem, feedback: FeedbackLaw, trajectory: Trajectory
    ) -> ControlSequence:
        """Controls u_j = F_nu(j) x(t_j) realised along a closed-loop trajectory."""
        rows = [
            feedback.gains[system.schedule.nu(j) - 1] @ trajectory.pre[j - 1]
            for j in range(1, trajectory.steps + 1)
        ]
        return ControlSequence(values=np.array(rows).reshape(trajectory.steps, system.input_dim))

    def transition(
        self, system: ImpulseSystem, feedback: FeedbackLaw, start: int, stop: int
    ) -> np.ndarray:
        """Closed-loop transition x(t_start+) -> x(t_stop+)."""
        feedback.check(system)
        if not 0 <= start <= stop:
            raise InvalidParameterError("start/stop", (start, stop), "0 <= start <= stop")
        d = system.state_dim
        product = np.eye(d)
        for j in range(start + 1, stop + 1):
            gain = feedback.gains[system.schedule.nu(j) - 1]
            product = (np.eye(d) + system.input(j) @ gain) @ system.flow(j) @ product
        return product

    def monodromy(self, system: ImpulseSystem, feedback: FeedbackLaw) -> np.ndarray:
        """Phi = (I + B_hbar F_hbar) E_hbar ... (I + B_1 F_1) E_1."""
        return self.transition(system, feedback, 0, system.hbar)

    def spectral_radius(self, M) -> float:
        """Largest eigenvalue modulus.

        Raises:
            DimensionMismatchError: If M is not square
        """
        M = self._square(M, "spectral radius argument")
        if M.shape[0] > _DENSE_EIG_LIMIT:
            values = eigs(M, k=1, which="LM", return_eigenvectors=False)
            return float(np.abs(values).max())
        return float(np.abs(np.linalg.eigvals(M)).max())

    def decay_rate_fit(self, trajectory: Trajectory) -> DecayFit:
        """Fit ||x(t_j+)|| ~ C exp(-mu t_j) ||x0|| by least squares on log-norms.

        Samples from the first zero norm on are dropped. A trajectory that
        vanishes before two usable samples reports mu = inf.

        Raises:
            InvalidParameterError: If fewer than 3 samples are given
        """
        x0_norm = float(np.linalg.norm(trajectory.x0))
        norms = np.asarray(trajectory.norms_post)
        times = np.asarray(trajectory.times)

        zero = np.flatnonzero(norms == 0.0)
        usable = int(zero[0]) if zero.size else norms.size
        if x0_norm == 0.0 or (zero.size and usable < 2):
            logger.debug("State vanished; decay rate is infinite")
            return DecayFit(C=0.0, mu=float("inf"), samples=usable)
        if usable < 3 and not zero.size:
            raise InvalidParameterError("trajectory", usable, "at least 3 samples")

        slope, intercept = np.polyfit(times[:usable], np.log(norms[:usable]), 1)
        fit = DecayFit(C=float(np.exp(intercept) / x0_norm), mu=float(-slope), samples=usable)
        if not fit.stable:
            logger.warning(f"Fitted decay rate {fit.mu:.4g} is not positive: trajectory unstable")
        return fit

    def continuous_envelope(
        self, system: ImpulseSystem, trajectory: Trajectory, flow_bounds: list[float]
    ) -> list[float]:
        """Bounds on sup ||x(t)|| over each interval (t_{j-1}, t_j].

        Uses c_k >= sup_{0 <= s <= t_k - t_{k-1}} ||e^{As}|| per slot.
        """
        if len(flow_bounds) != system.hbar:
            raise DimensionMismatchError("flow bounds", system.hbar, len(flow_bounds))
        previous = [float(np.linalg.norm(trajectory.x0)), *trajectory.norms_post[:-1]]
        return [
            flow_bounds[system.schedule.nu(j) - 1] * previous[j - 1]
            for j in range(1, trajectory.steps + 1)
        ]
