"""Weak observability inequalities, steering controls and concatenated stabilization."""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from ..engine import Engine
from ..exceptions import (
    ContractionViolatedError,
    InvalidParameterError,
    SteeringError,
)
from ..models.observability import (
    ConcatenationReport,
    HolderReport,
    ObservabilityPair,
    ObservationRange,
    SteeringResult,
    WeakObsDecision,
    WeakObsMode,
    WeakObsReport,
)
from ..models.system import ControlSequence, FeedbackLaw, ImpulseSystem, Trajectory
from .base import BaseSolver
from .dynamics import DynamicsSolver

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]

_MU_SCHEDULE = (1e-1, 1e-3, 1e-6, 1e-9)
_STALL_TOL = 1e-7
_HOLDS_TOL = 1e-9


class ObservabilityAnalyzer(BaseSolver):
    """Weak observability constants and the controls they certify."""

    def __init__(self, engine: Engine):
        super().__init__(engine)
        self.dynamics = DynamicsSolver(engine)

    # ------------------------------------------------------------------
    # Pair assembly
    # ------------------------------------------------------------------

    def build_observability_pair(
        self, system: ImpulseSystem, K: int, observation_range: ObservationRange = "full"
    ) -> ObservabilityPair:
        """Assemble L = E_nu(K)...E_1 and G with blocks B_nu(j)^T (E_K...E_{j+1})^T.

        Args:
            system: Impulse system
            K: Horizon index (number of instants)
            observation_range: "full" sums j = 1..K, "exclusive" sums j = 1..K-1

        Returns:
            The observability pair
        """
        if K < 1:
            raise InvalidParameterError("K", K, ">= 1")
        last = K if observation_range == "full" else K - 1
        blocks = [
            (self._flow_product(system, j, K) @ system.input(j)).T for j in range(1, last + 1)
        ]
        G = np.vstack(blocks) if blocks else np.zeros((0, system.state_dim))
        return ObservabilityPair(
            L=self._flow_product(system, 0, K),
            G=G,
            K=K,
            block_size=system.input_dim,
            observation_range=observation_range,
        )

    def _null_basis(self, pair: ObservabilityPair) -> np.ndarray:
        if pair.G.shape[0] == 0:
            return np.eye(pair.state_dim)
        return null_space(pair.G, rcond=self.settings.RANK_THRESHOLD)

    def _null_gain(self, pair: ObservabilityPair) -> tuple[float, np.ndarray | None]:
        """max ||L^T phi|| over unit phi in null(G), with its maximizer."""
        N = self._null_basis(pair)
        if N.shape[1] == 0:
            return 0.0, None
        _, s, vt = np.linalg.svd(pair.L.T @ N)
        return float(s[0]), N @ vt[0]

    @staticmethod
    def _check_sigma(sigma: float) -> None:
        if not 0.0 < sigma < 1.0:
            raise InvalidParameterError("sigma", sigma, "0 < sigma < 1")

    # ------------------------------------------------------------------
    # Sphere searches
    # ------------------------------------------------------------------

    def _starts(self, pair: ObservabilityPair, extra: list[np.ndarray] | None = None):
        """Eigen-initialized directions followed by seeded random starts."""
        d = pair.state_dim
        _, vectors = np.linalg.eigh(pair.L @ pair.L.T)
        starts = [vectors[:, i] for i in range(d - 1, max(-1, d - 6), -1)]
        if pair.G.shape[0]:
            _, _, vt = np.linalg.svd(pair.G)
            starts.extend(vt[-min(d, 3) :])
        starts.extend(extra or [])
        for i in range(self.settings.MULTISTART):
            starts.append(self.engine.rng(offset=i).standard_normal(d))
        return starts

    @staticmethod
    def _sphere_maximize(
        objective: Objective, starts: list[np.ndarray]
    ) -> tuple[float, np.ndarray]:
        """Best value of a degree-zero homogeneous objective over the starts.

        Each start is refined by BFGS; ties keep the earliest start.
        """

        def negated(phi: np.ndarray) -> tuple[float, np.ndarray]:
            value, grad = objective(phi)
            return -value, -grad

        best_value, best_phi = -math.inf, starts[0]
        for start in starts:
            phi0 = start / np.linalg.norm(start)
            value, _ = objective(phi0)
            if value > best_value:
                best_value, best_phi = value, phi0
            result = minimize(
                negated, phi0, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": 400}
            )
            phi = result.x / np.linalg.norm(result.x)
            value, _ = objective(phi)
            if np.isfinite(value) and value > best_value:
                best_value, best_phi = value, phi
        return float(best_value), best_phi

    @staticmethod
    def _norm_and_grad(M: np.ndarray, phi: np.ndarray) -> tuple[float, np.ndarray]:
        """||M phi|| and its gradient M^T M phi / ||M phi||."""
        if M.shape[0] == 0:
            return 0.0, np.zeros_like(phi)
        image = M @ phi
        value = float(np.linalg.norm(image))
        if value == 0.0:
            return 0.0, np.zeros_like(phi)
        return value, M.T @ image / value

    def _ratio_objective(self, pair: ObservabilityPair, sigma: float) -> Objective:
        """f(phi) = (||L^T phi|| - sigma ||phi||) / ||G phi||."""
        Lt = pair.L.T
        floor = 1e-12 * max(1.0, self.engine.opnorm(pair.G))

        def objective(phi: np.ndarray) -> tuple[float, np.ndarray]:
            n = float(np.linalg.norm(phi))
            a, grad_a = self._norm_and_grad(Lt, phi)
            g, grad_g = self._norm_and_grad(pair.G, phi)
            g = max(g, floor * n)
            value = (a - sigma * n) / g
            grad = (grad_a - sigma * phi / n) / g - value * grad_g / g
            return value, grad

        return objective

    def _defect_objective(self, pair: ObservabilityPair, C: float) -> Objective:
        """h(phi) = (||L^T phi|| - C ||G phi||) / ||phi||."""
        Lt = pair.L.T

        def objective(phi: np.ndarray) -> tuple[float, np.ndarray]:
            n = float(np.linalg.norm(phi))
            a, grad_a = self._norm_and_grad(Lt, phi)
            g, grad_g = self._norm_and_grad(pair.G, phi)
            value = (a - C * g) / n
            grad = (grad_a - C * grad_g) / n - value * phi / n**2
            return value, grad

        return objective

    def _holder_objective(self, pair: ObservabilityPair, theta: float) -> Objective:
        """log of ||L^T phi|| ||phi||^(theta-1) / (sum_j ||G_j phi||)^theta."""
        Lt = pair.L.T
        blocks = pair.blocks()

        def objective(phi: np.ndarray) -> tuple[float, np.ndarray]:
            n = float(np.linalg.norm(phi))
            a, grad_a = self._norm_and_grad(Lt, phi)
            total, grad_total = 0.0, np.zeros_like(phi)
            for block in blocks:
                value, grad = self._norm_and_grad(block, phi)
                total += value
                grad_total += grad
            if a == 0.0:
                return -1e300, np.zeros_like(phi)
            total = max(total, 1e-300)
            value = math.log(a) + (theta - 1.0) * math.log(n) - theta * math.log(total)
            grad = grad_a / a + (theta - 1.0) * phi / n**2 - theta * grad_total / total
            return value, grad

        return objective

    # ------------------------------------------------------------------
    # Weak observability
    # ------------------------------------------------------------------

    def weak_obs_minimal_C(
        self, pair: ObservabilityPair, sigma: float, mode: WeakObsMode = "search"
    ) -> WeakObsReport:
        """Constant C of ||L^T phi|| <= C ||G phi|| + sigma ||phi||.

        "search" returns a multi-start estimate of the smallest C (a lower
        estimate). "sufficient" returns the smallest C on a log grid with
        C^2 G^T G + sigma^2 I - L L^T positive semidefinite, which certifies
        the inequality.

        Raises:
            InvalidParameterError: If sigma is outside (0, 1) or mode is unknown
        """
        self._check_sigma(sigma)
        if mode == "search":
            report = self._search_C(pair, sigma)
        elif mode == "sufficient":
            report = self._sufficient_C(pair, sigma)
        else:
            raise InvalidParameterError("mode", mode, "'search' or 'sufficient'")
        logger.info(
            f"Weak observability ({mode}) K={pair.K} sigma={sigma}: "
            f"{'C=' + format(report.C, '.6g') if report.feasible else 'infeasible'}"
        )
        return report

    def _report(self, pair: ObservabilityPair, sigma: float, mode: WeakObsMode, **fields) -> WeakObsReport:
        return WeakObsReport(
            sigma=sigma, K=pair.K, mode=mode, observation_range=pair.observation_range, **fields
        )

    def _search_C(self, pair: ObservabilityPair, sigma: float) -> WeakObsReport:
        gain, direction = self._null_gain(pair)
        if gain > sigma * (1.0 + 1e-12):
            return self._report(
                pair,
                sigma,
                "search",
                C=None,
                feasible=False,
                witness=direction,
                message="null space of the observation map violates the inequality",
                diagnostics={"null_gain": gain},
            )

        _, s, vt = np.linalg.svd(pair.L.T)
        if s[0] <= sigma:
            return self._report(pair, sigma, "search", C=0.0, feasible=True, witness=vt[0])

        value, witness = self._sphere_maximize(
            self._ratio_objective(pair, sigma), self._starts(pair)
        )
        return self._report(
            pair,
            sigma,
            "search",
            C=max(0.0, value),
            feasible=True,
            witness=witness,
            diagnostics={"null_gain": gain, "starts": self.settings.MULTISTART},
        )

    def _sufficient_C(self, pair: ObservabilityPair, sigma: float) -> WeakObsReport:
        gain, direction = self._null_gain(pair)
        if gain >= sigma:
            return self._report(
                pair,
                sigma,
                "sufficient",
                C=None,
                feasible=False,
                witness=direction,
                message="null space of the observation map violates the inequality",
                diagnostics={"null_gain": gain},
            )

        d = pair.state_dim
        LLt = pair.L @ pair.L.T
        GtG = pair.G.T @ pair.G
        slack = 1e-13 * max(1.0, self.engine.opnorm(LLt))

        def certified(C: float) -> bool:
            return float(np.linalg.eigvalsh(C**2 * GtG + sigma**2 * np.eye(d) - LLt).min()) >= -slack

        if certified(0.0):
            return self._report(pair, sigma, "sufficient", C=0.0, feasible=True)

        per_decade = self.settings.SUFFICIENT_GRID_PER_DECADE
        c_min, c_max = self.settings.SUFFICIENT_C_MIN, self.settings.SUFFICIENT_C_MAX
        size = int(math.ceil(per_decade * math.log10(c_max / c_min))) + 1
        grid = c_min * 10.0 ** (np.arange(size) / per_decade)

        if not certified(grid[-1]):
            return self._report(
                pair,
                sigma,
                "sufficient",
                C=None,
                feasible=False,
                message=f"no certificate up to C = {c_max:.3g}",
                diagnostics={"null_gain": gain},
            )

        lo, hi = 0, size - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if certified(grid[mid]):
                hi = mid
            else:
                lo = mid + 1
        return self._report(
            pair,
            sigma,
            "sufficient",
            C=float(grid[lo]),
            feasible=True,
            diagnostics={"null_gain": gain, "grid_index": lo},
        )

    def weak_obs_holds(self, pair: ObservabilityPair, sigma: float, C: float) -> WeakObsDecision:
        """Decide ||L^T phi|| <= C ||G phi|| + sigma ||phi|| on the unit sphere."""
        self._check_sigma(sigma)
        if C < 0.0:
            raise InvalidParameterError("C", C, ">= 0")
        _, null_direction = self._null_gain(pair)
        extra = [null_direction] if null_direction is not None else []
        value, witness = self._sphere_maximize(
            self._defect_objective(pair, C), self._starts(pair, extra)
        )
        worst = value - sigma
        tolerance = _HOLDS_TOL * max(1.0, self.engine.opnorm(pair.L))
        return WeakObsDecision(holds=worst <= tolerance, worst=worst, witness=witness)

    def holder_obs_check(self, pair: ObservabilityPair, theta: float) -> HolderReport:
        """Estimate sup ||L^T phi|| / (sum_j ||G_j phi||)^theta over unit phi."""
        if not 0.0 < theta <= 1.0:
            raise InvalidParameterError("theta", theta, "0 < theta <= 1")
        gain, direction = self._null_gain(pair)
        if gain > self.settings.RANK_THRESHOLD * max(1.0, self.engine.opnorm(pair.L)):
            return HolderReport(
                theta=theta,
                C=None,
                feasible=False,
                witness=direction,
                message="observation map vanishes where the flow does not",
            )
        value, witness = self._sphere_maximize(
            self._holder_objective(pair, theta), self._starts(pair)
        )
        return HolderReport(theta=theta, C=math.exp(value), feasible=True, witness=witness)

    def holder_theta_scan(self, pair: ObservabilityPair, thetas: list[float]) -> HolderReport:
        """Smallest Hoelder constant over a grid of exponents."""
        reports = [self.holder_obs_check(pair, theta) for theta in thetas]
        feasible = [report for report in reports if report.feasible]
        if not feasible:
            return reports[0]
        return min(feasible, key=lambda report: report.C)

    # ------------------------------------------------------------------
    # Constructive certificates
    # ------------------------------------------------------------------

    def feedback_certificate(
        self, system: ImpulseSystem, feedback: FeedbackLaw, sigma: float, max_steps: int = 1000
    ) -> WeakObsReport:
        """Weak observability constant induced by a stabilizing feedback.

        The feedback control is linear in x0; k is the first index with
        closed-loop transition norm <= sigma and C is the norm of x0 -> (u_1..u_k).
        """
        self._check_sigma(sigma)
        feedback.check(system)
        d = system.state_dim
        transition = np.eye(d)
        rows: list[np.ndarray] = []
        for j in range(1, max_steps + 1):
            gain = feedback.gains[system.schedule.nu(j) - 1]
            pre = system.flow(j) @ transition
            rows.append(gain @ pre)
            transition = pre + system.input(j) @ rows[-1]
            if self.engine.opnorm(transition) <= sigma:
                C = self.engine.opnorm(np.vstack(rows))
                return WeakObsReport(
                    sigma=sigma, K=j, C=C, feasible=True, mode="feedback", observation_range="full"
                )
        return WeakObsReport(
            sigma=sigma,
            K=max_steps,
            C=None,
            feasible=False,
            mode="feedback",
            message=f"closed loop did not contract to {sigma} within {max_steps} steps",
        )

    def period_anchor_transfer(self, system: ImpulseSystem, report: WeakObsReport) -> WeakObsReport:
        """Move a full-range inequality at k to the period anchor k* hbar > k.

        sigma grows by max_l ||E_hbar ... E_{l+1}||; the range becomes 1..k* hbar - 1.
        """
        if not report.feasible or report.C is None:
            raise InvalidParameterError("report", report.mode, "a feasible report")
        hbar = system.hbar
        factor = max(self.engine.opnorm(self._flow_product(system, ell, hbar)) for ell in range(hbar))
        sigma = report.sigma * factor
        k_star = report.K // hbar + 1
        feasible = sigma < 1.0
        return WeakObsReport(
            sigma=sigma,
            K=k_star * hbar,
            C=report.C if feasible else None,
            feasible=feasible,
            mode="transfer",
            observation_range="exclusive",
            message=None if feasible else f"transferred sigma {sigma:.4g} >= 1",
            diagnostics={"k_star": k_star, "flow_factor": factor},
        )

    def steering_control(
        self,
        system: ImpulseSystem,
        x0,
        K: int,
        sigma: float,
        eps: float,
        C: float | None = None,
    ) -> SteeringResult:
        """Control steering x0 to ||x(t_{K hbar})|| <= sigma ||x0|| + eps.

        Minimizes 1/2 ||G phi||^2 + <phi, L x0> + (sigma ||x0|| + eps) ||phi||
        for the exclusive pair at horizon K hbar and sets u_j = G_j phi*.

        Args:
            system: Impulse system
            x0: Initial state
            K: Horizon in periods
            sigma: Contraction level in (0, 1)
            eps: Positive slack
            C: Weak observability constant at (sigma, K hbar); computed in
                sufficient mode when omitted

        Raises:
            SteeringError: If the functional is not coercive, the minimization
                stalls, or a bound fails
        """
        self._check_sigma(sigma)
        if eps <= 0.0:
            raise InvalidParameterError("eps", eps, "> 0")
        pair = self.build_observability_pair(system, K * system.hbar, "exclusive")
        if C is None:
            report = self.weak_obs_minimal_C(pair, sigma, "sufficient")
            C = report.C
            if C is None:
                logger.warning("No weak observability certificate; control bound not checked")
        return self._steer(system, pair, self._state(system, x0), K, sigma, eps, C)

    def _steer(
        self,
        system: ImpulseSystem,
        pair: ObservabilityPair,
        x0: np.ndarray,
        K: int,
        sigma: float,
        eps: float,
        C: float | None,
    ) -> SteeringResult:
        steps = K * system.hbar
        m, d = system.input_dim, system.state_dim
        scale = float(np.linalg.norm(x0))
        phi = np.zeros(d)

        if scale > 0.0:
            b = pair.L @ (x0 / scale)
            c = sigma + eps / scale
            if np.linalg.norm(b) > c:
                phi = self._minimize_steering(pair, b, c)

        values = np.zeros((steps, m))
        if pair.G.shape[0]:
            values[: steps - 1] = (pair.G @ phi).reshape(steps - 1, m) * scale
        u = ControlSequence(values=values)
        trajectory = self.dynamics.simulate_open_loop(system, x0, u, steps)
        achieved = float(np.linalg.norm(trajectory.pre[-1]))
        control_norm = u.prefix_norm

        target = sigma * scale + eps
        if achieved > target + 1e-8:
            raise SteeringError(
                f"steering missed its target: {achieved:.6e} > {target:.6e}",
                details={"phi": phi.tolist(), "achieved": achieved, "target": target},
            )
        if C is not None and control_norm > 2.0 * C * scale + 1e-8:
            raise SteeringError(
                f"steering control norm {control_norm:.6e} exceeds 2 C ||x0|| = {2 * C * scale:.6e}",
                details={"phi": phi.tolist(), "C": C},
            )

        logger.debug(f"Steered ||x0|| = {scale:.3e} to {achieved:.3e} with ||u|| = {control_norm:.3e}")
        return SteeringResult(
            u=u,
            trajectory=trajectory,
            phi_star=phi,
            achieved_norm=achieved,
            control_norm=control_norm,
            epsilon=eps,
            sigma=sigma,
            K=K,
            C=C,
        )

    def _minimize_steering(self, pair: ObservabilityPair, b: np.ndarray, c: float) -> np.ndarray:
        """Minimize 1/2 phi^T H phi + <b, phi> + c sqrt(||phi||^2 + mu^2) with mu -> 0."""
        d = pair.state_dim
        H = pair.G.T @ pair.G

        N = self._null_basis(pair)
        if N.shape[1] and np.linalg.norm(N.T @ b) >= c:
            logger.error("Steering functional is not coercive")
            raise SteeringError(
                "steering functional is not coercive on the unobserved subspace",
                details={"null_projection": float(np.linalg.norm(N.T @ b)), "level": c},
            )

        phi = -np.linalg.lstsq(H + c * np.eye(d), b, rcond=None)[0]
        history = []
        b_scale = max(1.0, float(np.linalg.norm(b)))
        for mu in (*_MU_SCHEDULE, self.settings.STEERING_MU_FINAL):

            def fun(x, mu=mu):
                r = math.sqrt(float(x @ x) + mu * mu)
                return 0.5 * float(x @ H @ x) + float(b @ x) + c * r

            def jac(x, mu=mu):
                r = math.sqrt(float(x @ x) + mu * mu)
                return H @ x + b + c * x / r

            def hess(x, mu=mu):
                r = math.sqrt(float(x @ x) + mu * mu)
                return H + c * (np.eye(d) / r - np.outer(x, x) / r**3)

            result = minimize(
                fun, phi, jac=jac, hess=hess, method="trust-exact", options={"gtol": 1e-12 * b_scale}
            )
            phi = result.x
            history.append(
                {"mu": mu, "phi": phi.tolist(), "grad_norm": float(np.linalg.norm(jac(phi)))}
            )

        norm = float(np.linalg.norm(phi))
        residual = np.linalg.norm(H @ phi + b + c * phi / norm) if norm > 0.0 else math.inf
        if residual > _STALL_TOL * b_scale:
            logger.error(f"Steering minimization stalled, residual {residual:.3e}")
            raise SteeringError(
                "steering minimization stalled", details={"residual": float(residual), "iterates": history}
            )
        return phi

    def concatenated_stabilizing_control(
        self,
        system: ImpulseSystem,
        x0,
        K: int,
        sigma: float,
        eps: float,
        tol: float = 1e-10,
        C: float | None = None,
    ) -> ConcatenationReport:
        """Concatenate steering blocks of K periods until ||x|| < tol ||x0||.

        Block l steers x_{l-1} with slack eps ||x_{l-1}||, so every block
        contracts by at least sigma + eps.

        Raises:
            InvalidParameterError: If sigma + eps >= 1
            ContractionViolatedError: If a block fails to contract
        """
        self._check_sigma(sigma)
        rate = sigma + eps
        if rate >= 1.0:
            raise InvalidParameterError("sigma + eps", rate, "< 1")
        x0 = self._state(system, x0)
        scale = float(np.linalg.norm(x0))
        steps = K * system.hbar
        pair = self.build_observability_pair(system, steps, "exclusive")
        if C is None:
            C = self.weak_obs_minimal_C(pair, sigma, "sufficient").C

        if scale == 0.0:
            empty = np.zeros((0, system.state_dim))
            return ConcatenationReport(
                u=ControlSequence(values=np.zeros((0, system.input_dim))),
                trajectory=Trajectory(x0=x0, times=[], pre=empty, post=empty),
                block_norms=[0.0],
                ratio=0.0,
                control_norm=0.0,
                control_bound=0.0,
                partial_sums=[],
                increments=[],
                certified=True,
            )

        blocks: list[np.ndarray] = []
        block_norms = [scale]
        state = x0
        while block_norms[-1] >= tol * scale:
            if len(blocks) >= self.settings.MAX_BLOCKS:
                logger.warning(f"Stopped after {len(blocks)} blocks at ||x|| = {block_norms[-1]:.3e}")
                break
            result = self._steer(system, pair, state, K, sigma, eps * block_norms[-1], C)
            ratio = result.achieved_norm / block_norms[-1]
            if ratio >= 1.0:
                logger.error(f"Steering block {len(blocks) + 1} failed to contract")
                raise ContractionViolatedError(len(blocks) + 1, ratio)
            blocks.append(result.u.values)
            state = result.trajectory.post[-1]
            block_norms.append(result.achieved_norm)

        u = ControlSequence(values=np.vstack(blocks))
        trajectory = self.dynamics.simulate_open_loop(system, x0, u, u.steps)
        squares = np.linalg.norm(trajectory.pre, axis=1) ** 2
        partial = np.cumsum(squares)[steps - 1 :: steps]
        increments = np.diff(np.concatenate([[0.0], partial]))

        positive = [(l, n) for l, n in enumerate(block_norms) if n > 0.0]
        if len(positive) >= 2:
            index, norms = zip(*positive, strict=True)
            ratio = float(np.exp(np.polyfit(index, np.log(norms), 1)[0]))
        else:
            ratio = 0.0

        control_norm = u.prefix_norm
        bound = 4.0 * C**2 * scale**2 / (1.0 - rate**2) if C is not None else math.inf
        reached = block_norms[-1] < tol * scale
        certified = reached and control_norm**2 <= bound * (1.0 + 1e-8) + 1e-12
        logger.info(
            f"Concatenated {len(blocks)} blocks: ratio {ratio:.4f}, ||u|| = {control_norm:.4e}, "
            f"certified={certified}"
        )
        return ConcatenationReport(
            u=u,
            trajectory=trajectory,
            block_norms=block_norms,
            ratio=ratio,
            control_norm=control_norm,
            control_bound=bound,
            partial_sums=partial.tolist(),
            increments=increments.tolist(),
            certified=certified,
            message=None if reached else "block budget exhausted before reaching tolerance",
        )
