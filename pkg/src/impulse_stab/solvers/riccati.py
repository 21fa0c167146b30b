"""Finite and infinite horizon LQ problems and the periodic Riccati-type equation."""

import logging
import math

import numpy as np

from ..engine import Engine
from ..exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    InvalidParameterError,
    NumericalError,
    StabilizationError,
)
from ..models.riccati import (
    AdmissibilityReport,
    CompletionOfSquaresReport,
    CostInterval,
    CostWeights,
    DynamicProgrammingReport,
    NotStabilizable,
    RiccatiSolution,
    TerminalWeight,
)
from ..models.system import ControlSequence, FeedbackLaw, ImpulseSystem
from .base import BaseSolver
from .dynamics import DynamicsSolver

logger = logging.getLogger(__name__)

# Periods simulated when an infinite-horizon quantity is extrapolated.
_EXTRAPOLATION_PERIODS = 50


class RiccatiSolver(BaseSolver):
    """LQ costs, Riccati recursions and feedback synthesis."""

    def __init__(self, engine: Engine):
        super().__init__(engine)
        self.dynamics = DynamicsSolver(engine)

    def _gain(self, B: np.ndarray, R: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (R + B^T P B, (R + B^T P B)^{-1} B^T P)."""
        S = R + B.T @ P @ B
        return S, self.engine.spd_solve(S, B.T @ P)

    def _backward_step(
        self, system: ImpulseSystem, weights: CostWeights, j: int, P: np.ndarray
    ) -> np.ndarray:
        """P_{j-1} = E^T (P_j + Q - P_j B (R + B^T P_j B)^{-1} B^T P_j) E at slot nu(j)."""
        k = system.schedule.nu(j) - 1
        E, B = system.flows[k], system.inputs[k]
        _, K = self._gain(B, weights.R[k], P)
        inner = P + weights.Q[k] - P @ B @ K
        return self.engine.symmetrize(E.T @ inner @ E)

    def _stage_costs(
        self, system: ImpulseSystem, weights: CostWeights, pre: np.ndarray, u: ControlSequence
    ) -> tuple[np.ndarray, np.ndarray]:
        state_costs = np.empty(pre.shape[0])
        control_costs = np.empty(pre.shape[0])
        for j in range(1, pre.shape[0] + 1):
            k = system.schedule.nu(j) - 1
            x, v = pre[j - 1], u[j]
            state_costs[j - 1] = x @ weights.Q[k] @ x
            control_costs[j - 1] = v @ weights.R[k] @ v
        return state_costs, control_costs

    def _period_sums(self, values: np.ndarray, hbar: int) -> np.ndarray:
        periods = values.size // hbar
        return values[: periods * hbar].reshape(periods, hbar).sum(axis=1)

    def _geometric_tail(self, values: np.ndarray, hbar: int) -> tuple[float, float]:
        """Ratio of the last two period sums and the extrapolated remainder."""
        sums = self._period_sums(values, hbar)
        if sums.size < 2:
            return math.nan, math.inf
        last, previous = float(sums[-1]), float(sums[-2])
        if last == 0.0:
            return 0.0, 0.0
        if previous == 0.0:
            return math.inf, math.inf
        ratio = last / previous
        if ratio >= 1.0:
            return ratio, math.inf
        return ratio, last * ratio / (1.0 - ratio)

    def _simulation_steps(self, system: ImpulseSystem, u: ControlSequence) -> int:
        if u.tail_norm == 0.0:
            return max(u.steps, _EXTRAPOLATION_PERIODS * system.hbar)
        return u.steps

    def lq_cost(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        x0,
        u: ControlSequence,
        horizon: int | None = None,
        state_tail: float | None = None,
    ) -> CostInterval:
        """Cost sum_j <Q_j x(t_j), x(t_j)> + <R_j u_j, u_j>.

        Args:
            system: Impulse system
            weights: Stage weights
            x0: Initial state
            u: Control sequence
            horizon: Number of stages, or None for the infinite horizon
            state_tail: Bound on the state cost beyond the computed stages; when
                omitted it is extrapolated geometrically from the last two periods

        Returns:
            Exact cost for finite horizons, an enclosing interval otherwise

        Raises:
            InvalidParameterError: If the infinite horizon is asked without a tail bound
        """
        weights.check(system)
        if horizon is not None:
            trajectory = self.dynamics.simulate_open_loop(system, x0, u, horizon)
            state, control = self._stage_costs(system, weights, trajectory.pre, u)
            total = float(state.sum() + control.sum())
            return CostInterval(lower=total, upper=total, steps=horizon)

        if u.tail_norm is None:
            raise InvalidParameterError("u.tail_norm", None, "a tail bound for the infinite horizon")

        steps = self._simulation_steps(system, u)
        trajectory = self.dynamics.simulate_open_loop(system, x0, u, steps)
        state, control = self._stage_costs(system, weights, trajectory.pre, u)
        lower = float(state.sum() + control.sum())

        if state_tail is None:
            if u.tail_norm > 0.0:
                logger.warning("Control tail present without a state tail bound; upper cost is infinite")
                state_tail = math.inf
            else:
                _, state_tail = self._geometric_tail(state, system.hbar)
        r_max = max(self.engine.opnorm(R) for R in weights.R)
        upper = lower + state_tail + r_max * u.tail_norm**2
        return CostInterval(lower=lower, upper=upper, steps=steps)

    def is_admissible(
        self,
        system: ImpulseSystem,
        x0,
        u: ControlSequence,
        tol: float = 1e-10,
        state_tail: float | None = None,
    ) -> AdmissibilityReport:
        """Decide numerically whether sum_j ||x(t_j)||^2 is finite."""
        if u.tail_norm is None:
            return AdmissibilityReport(
                admissible=False,
                inconclusive=True,
                partial_sums=[],
                ratio=math.nan,
                tail_estimate=math.inf,
                message="control has no tail bound",
            )
        steps = self._simulation_steps(system, u)
        trajectory = self.dynamics.simulate_open_loop(system, x0, u, steps)
        squares = np.linalg.norm(trajectory.pre, axis=1) ** 2
        partial = np.cumsum(squares)
        ratio, tail = self._geometric_tail(squares, system.hbar)
        if state_tail is not None:
            tail = state_tail

        if ratio >= 1.0:
            admissible, inconclusive, message = False, False, "state series diverges"
        elif tail < tol:
            admissible, inconclusive, message = True, False, None
        else:
            admissible, inconclusive, message = False, True, "remaining increments above tolerance"
            logger.warning(f"Admissibility inconclusive: tail estimate {tail:.3e} >= {tol:.1e}")

        return AdmissibilityReport(
            admissible=admissible,
            inconclusive=inconclusive,
            partial_sums=partial.tolist(),
            ratio=ratio,
            tail_estimate=tail,
            message=message,
        )

    def finite_horizon_riccati(
        self, system: ImpulseSystem, weights: CostWeights, terminal: TerminalWeight, khat: int
    ) -> list[np.ndarray]:
        """Backward recursion from P_khat = M.

        Returns:
            P^khat_0, ..., P^khat_khat
        """
        weights.check(system)
        if khat < 1:
            raise InvalidParameterError("khat", khat, ">= 1")
        d = system.state_dim
        if terminal.M.shape != (d, d):
            raise DimensionMismatchError("M", (d, d), terminal.M.shape)

        Ps: list[np.ndarray] = [np.empty((d, d))] * (khat + 1)
        Ps[khat] = terminal.M
        for j in range(khat, 0, -1):
            Ps[j - 1] = self._backward_step(system, weights, j, Ps[j])
            self.engine.check_finite(Ps[j - 1], "finite-horizon Riccati recursion", step=j)
        return Ps

    def finite_horizon_value(self, P, x0) -> float:
        """<P x0, x0>."""
        x = np.asarray(x0, dtype=float).reshape(-1)
        return float(x @ np.asarray(P, dtype=float) @ x)

    def finite_horizon_cost(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        terminal: TerminalWeight,
        x0,
        v: ControlSequence,
        ell: int,
        khat: int,
    ) -> float:
        """J(v; x0, ell, khat) for the system started at x(t_ell+) = x0.

        v[1] is applied at t_{ell+1}.
        """
        weights.check(system)
        x = self._state(system, x0)
        total = 0.0
        for i, j in enumerate(range(ell + 1, khat + 1), start=1):
            k = system.schedule.nu(j) - 1
            x = system.flows[k] @ x
            u = v[i]
            total += x @ weights.Q[k] @ x + u @ weights.R[k] @ u
            x = x + system.inputs[k] @ u
        return float(total + x @ terminal.M @ x)

    def finite_horizon_optimal_control(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        Ps: list[np.ndarray],
        x0,
        ell: int,
        khat: int,
    ) -> ControlSequence:
        """Optimal v_j = -(R_j + B_j^T P_j B_j)^{-1} B_j^T P_j x(t_j) for j = ell+1..khat."""
        x = self._state(system, x0)
        rows = []
        for j in range(ell + 1, khat + 1):
            k = system.schedule.nu(j) - 1
            x = system.flows[k] @ x
            _, K = self._gain(system.inputs[k], weights.R[k], Ps[j])
            v = -K @ x
            rows.append(v)
            x = x + system.inputs[k] @ v
        values = np.array(rows).reshape(len(rows), system.input_dim)
        return ControlSequence(values=values)

    def riccati_residual(
        self, system: ImpulseSystem, weights: CostWeights, solution: RiccatiSolution
    ) -> float:
        """Max over slots of ||P_{k-1} - step_k(P_k)|| plus ||P_0 - P_hbar||."""
        P = solution.P
        defect = max(
            self.engine.opnorm(P[k - 1] - self._backward_step(system, weights, k, P[k]))
            for k in range(1, system.hbar + 1)
        )
        return defect + self.engine.opnorm(P[0] - P[system.hbar])

    def periodic_riccati_solve(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        tol: float | None = None,
        max_periods: int | None = None,
    ) -> RiccatiSolution | NotStabilizable:
        """Solve the periodic Riccati-type equation by value iteration from M = 0.

        Iterates whole periods of the backward recursion and compares the
        period-anchored iterates P_0..P_{hbar-1}. The tolerance is relative:
        both the change between successive periods and the residual must fall
        below tol * max(1, ||P_0||), which is the absolute test while ||P_0|| <= 1.

        Args:
            system: Impulse system
            weights: Stage weights with positive margins
            tol: Relative convergence tolerance (defaults to settings.RICCATI_TOL)
            max_periods: Period budget (defaults to settings.MAX_PERIODS)

        Returns:
            The periodic solution, or a NotStabilizable verdict

        Raises:
            NumericalError: On NaN before the divergence cap
            ConvergenceError: If the budget runs out without a verdict
            WeightsError: If an inner solve fails
        """
        weights.check(system)
        tol = tol or self.settings.RICCATI_TOL
        max_periods = max_periods or self.settings.MAX_PERIODS
        cap = self.settings.DIVERGENCE_CAP
        window = self.settings.GROWTH_WINDOW
        hbar, d = system.hbar, system.state_dim

        try:
            anchors = [np.zeros((d, d)) for _ in range(hbar)]
            log_norms: list[float] = []
            for period in range(1, max_periods + 1):
                current = anchors[0]
                fresh: list[np.ndarray] = [np.empty((d, d))] * hbar
                for k in range(hbar, 0, -1):
                    current = self._backward_step(system, weights, k, current)
                    fresh[k - 1] = current
                self.engine.check_finite(current, "periodic Riccati iteration", period=period)

                norm = self.engine.opnorm(fresh[0])
                log_norms.append(math.log(norm) if norm > 0.0 else -math.inf)
                if norm > cap:
                    verdict = self._not_stabilizable(period, log_norms, norm, "divergence-cap")
                    logger.info(f"Riccati iteration diverged after {period} periods")
                    return verdict

                change = max(
                    self.engine.opnorm(new - old) / max(1.0, self.engine.opnorm(new))
                    for new, old in zip(fresh, anchors, strict=True)
                )
                anchors = fresh
                logger.debug(f"Period {period}: ||P_0|| = {norm:.6e}, change {change:.3e}")
                if change >= tol:
                    continue

                candidate = RiccatiSolution(anchors=anchors, residual=0.0, iterations=period)
                residual = self.riccati_residual(system, weights, candidate)
                if residual < tol * max(1.0, norm):
                    logger.info(
                        f"Riccati iteration converged after {period} periods, residual {residual:.3e}"
                    )
                    return candidate.model_copy(update={"residual": residual})

            growth = np.diff(log_norms[-(window + 1) :])
            if growth.size and np.all(growth > 0.0):
                logger.info(f"Riccati iterates still growing after {max_periods} periods")
                return self._not_stabilizable(
                    max_periods, log_norms, self.engine.opnorm(anchors[0]), "monotone-growth"
                )
        except Exception as e:
            logger.error(f"Error in periodic Riccati iteration: {e}")
            if isinstance(e, StabilizationError):
                raise
            raise NumericalError(f"Periodic Riccati iteration failed: {e}") from e

        logger.error(f"Riccati iteration did not converge in {max_periods} periods")
        raise ConvergenceError(
            f"No verdict after {max_periods} periods",
            details={"last_change": float(change), "norm": float(norm)},
        )

    def _not_stabilizable(
        self, periods: int, log_norms: list[float], norm: float, reason: str
    ) -> NotStabilizable:
        window = self.settings.GROWTH_WINDOW
        finite = [v for v in log_norms[-(window + 1) :] if math.isfinite(v)]
        rate = (finite[-1] - finite[0]) / (len(finite) - 1) if len(finite) > 1 else math.inf
        return NotStabilizable(
            periods=periods,
            growth_rate=rate,
            last_norm=norm,
            reason=reason,
            message=f"value iteration {reason} after {periods} periods",
        )

    def synthesize_feedback(
        self, system: ImpulseSystem, weights: CostWeights, solution: RiccatiSolution
    ) -> FeedbackLaw:
        """F_k = -(R_k + B_k^T P_k B_k)^{-1} B_k^T P_k for k = 1..hbar."""
        weights.check(system)
        gains = []
        for k in range(1, system.hbar + 1):
            _, K = self._gain(system.inputs[k - 1], weights.R[k - 1], solution.at(k))
            gains.append(-K)
        return FeedbackLaw(gains=gains)

    def completion_of_squares_check(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        solution: RiccatiSolution,
        x0,
        u: ControlSequence,
        horizon: int,
    ) -> CompletionOfSquaresReport:
        """Check J_n(u) + <P_n x(t_n+), x(t_n+)> = <P_0 x0, x0> + sum_j ||S_j^{1/2}(u_j + K_j x(t_j))||^2."""
        weights.check(system)
        trajectory = self.dynamics.simulate_open_loop(system, x0, u, horizon)
        state, control = self._stage_costs(system, weights, trajectory.pre, u)
        cost = float(state.sum() + control.sum())

        squares = 0.0
        for j in range(1, horizon + 1):
            k = system.schedule.nu(j) - 1
            S, K = self._gain(system.inputs[k], weights.R[k], solution.at(j))
            w = u[j] + K @ trajectory.pre[j - 1]
            squares += float(w @ S @ w)

        x_end = trajectory.post[-1]
        terminal = float(x_end @ solution.at(horizon) @ x_end)
        value = solution.value(trajectory.x0)
        return CompletionOfSquaresReport(
            cost=cost,
            value=value,
            squares=squares,
            terminal=terminal,
            defect=abs(cost + terminal - value - squares),
        )

    def dynamic_programming_check(
        self,
        system: ImpulseSystem,
        weights: CostWeights,
        solution: RiccatiSolution,
        x0,
        k: int,
        samples: int = 0,
    ) -> DynamicProgrammingReport:
        """Compare <P_0 x0, x0> with the k-step problem whose terminal weight is P_nu(k)."""
        x = self._state(system, x0)
        terminal = TerminalWeight(M=solution.at(k))
        P0_k = self.finite_horizon_riccati(system, weights, terminal, k)[0]
        value = solution.value(x)
        finite_value = self.finite_horizon_value(P0_k, x)

        sampled = 0.0
        scale = float(np.linalg.norm(x))
        rng = self.engine.rng()
        difference = solution.at(0) - P0_k
        for _ in range(samples):
            direction = rng.standard_normal(system.state_dim)
            direction *= scale / np.linalg.norm(direction)
            sampled = max(sampled, abs(float(direction @ difference @ direction)))

        return DynamicProgrammingReport(
            gap=abs(value - finite_value),
            value=value,
            finite_value=finite_value,
            sampled_gap=sampled,
        )
