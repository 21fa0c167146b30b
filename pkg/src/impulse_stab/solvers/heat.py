"""Spectral truncations of coupled heat systems and their rank tests."""

import logging
import math

import numpy as np
from scipy.linalg import block_diag, expm

from ..engine import Engine
from ..exceptions import DimensionMismatchError, InvalidParameterError, ScheduleError
from ..models.heat import (
    CrossCheckReport,
    DecompositionResult,
    HautusVerdict,
    HeatConfig,
    ScheduleClassReport,
    SpanEqualityReport,
)
from ..models.riccati import CostWeights, NotStabilizable
from ..models.system import FeedbackLaw, ImpulseSystem, PeriodicSchedule
from .base import BaseSolver
from .dynamics import DynamicsSolver
from .riccati import RiccatiSolver

logger = logging.getLogger(__name__)

# First Dirichlet eigenvalue of -d^2/dx^2 on (0, pi).
LAMBDA1 = 1.0

_PROFILE_SAMPLES = 200
_CROSS_CHECK_PERIODS = 30
_GROWTH_TIME = 10.0


def dirichlet_eigenvalue(i: int) -> float:
    """lambda_i = i^2 on (0, pi)."""
    return float(i * i)


class HeatAnalyzer(BaseSolver):
    """Builds heat truncations and runs the rank and schedule tests."""

    def __init__(self, engine: Engine):
        super().__init__(engine)
        self.dynamics = DynamicsSolver(engine)
        self.riccati = RiccatiSolver(engine)

    # ------------------------------------------------------------------
    # Truncation
    # ------------------------------------------------------------------

    def gamma_matrix(self, a: float, b: float, N: int) -> np.ndarray:
        """Gram matrix (Gamma)_ij = (2/pi) int_a^b sin(ix) sin(jx) dx, i, j = 1..N."""
        if not 0.0 <= a < b <= math.pi:
            raise ScheduleError(f"control interval ({a}, {b}) not inside (0, pi)")
        modes = np.arange(1, N + 1)
        i, j = np.meshgrid(modes, modes, indexing="ij")
        diff = i - j
        total = i + j

        def primitive(x: float) -> np.ndarray:
            with np.errstate(divide="ignore", invalid="ignore"):
                off = np.sin(diff * x) / np.where(diff == 0, 1, diff) - np.sin(total * x) / total
            diagonal = x - np.sin(total * x) / total
            return np.where(diff == 0, diagonal, off) / math.pi

        gamma = primitive(b) - primitive(a)
        return (gamma + gamma.T) / 2

    def build_heat_system(self, cfg: HeatConfig, schedule: PeriodicSchedule) -> ImpulseSystem:
        """N-mode truncation with state index (mode i, component c) -> i n + c.

        E_k = blockdiag_i exp((S - i^2 I) dt_k) and B_k = kron(Gamma_k, D_k).
        """
        if schedule.hbar != cfg.hbar:
            raise DimensionMismatchError("heat schedule", cfg.hbar, schedule.hbar)
        flows, inputs = [], []
        for k in range(1, cfg.hbar + 1):
            dt = schedule.interval(k)
            coupling = expm(cfg.S * dt)
            flows.append(
                block_diag(
                    *[math.exp(-dirichlet_eigenvalue(i) * dt) * coupling for i in range(1, cfg.N + 1)]
                )
            )
            a, b = cfg.omegas[k - 1]
            inputs.append(np.kron(self.gamma_matrix(a, b, cfg.N), cfg.D[k - 1]))
        logger.debug(f"Built heat truncation: n={cfg.n}, N={cfg.N}, hbar={cfg.hbar}")
        return ImpulseSystem(schedule=schedule, flows=flows, inputs=inputs)

    def evaluate_profile(self, cfg: HeatConfig, state, xs) -> np.ndarray:
        """Spatial field x(.) = sum_i e_i(.) state_i at the points xs, shape (n, len(xs))."""
        coefficients = np.asarray(state, dtype=float).reshape(cfg.N, cfg.n)
        xs = np.asarray(xs, dtype=float)
        basis = math.sqrt(2.0 / math.pi) * np.sin(np.outer(np.arange(1, cfg.N + 1), xs))
        return coefficients.T @ basis

    def flow_norm_bounds(self, cfg: HeatConfig, schedule: PeriodicSchedule) -> list[float]:
        """c_k = max over 0 <= s <= dt_k of max_i ||exp((S - i^2 I) s)||, sampled."""
        bounds = []
        for k in range(1, schedule.hbar + 1):
            grid = np.linspace(0.0, schedule.interval(k), _PROFILE_SAMPLES + 1)
            bounds.append(
                max(
                    math.exp(-LAMBDA1 * s) * self.engine.opnorm(expm(cfg.S * s)) for s in grid
                )
            )
        return bounds

    # ------------------------------------------------------------------
    # Rank tests
    # ------------------------------------------------------------------

    @staticmethod
    def kalman_matrix(S: np.ndarray, Dcat: np.ndarray) -> np.ndarray:
        """(D, S D, ..., S^{n-1} D)."""
        blocks = [Dcat]
        for _ in range(S.shape[0] - 1):
            blocks.append(S @ blocks[-1])
        return np.hstack(blocks)

    def _pair(self, S, Dcat) -> tuple[np.ndarray, np.ndarray]:
        S = self._square(S, "S")
        Dcat = np.atleast_2d(np.asarray(Dcat, dtype=float))
        if Dcat.shape[0] != S.shape[0]:
            raise DimensionMismatchError("D", f"{S.shape[0]} rows", Dcat.shape[0])
        return S, Dcat

    def kalman_rank(self, S, Dcat) -> int:
        S, Dcat = self._pair(S, Dcat)
        return self.engine.rank(self.kalman_matrix(S, Dcat))

    def hautus_verdict(self, S, Dcat, lambda1: float = LAMBDA1) -> HautusVerdict:
        """rank(lambda I - S, D) = n for every eigenvalue lambda of S with Re lambda >= lambda1."""
        if lambda1 <= 0.0:
            raise InvalidParameterError("lambda1", lambda1, "> 0")
        S, Dcat = self._pair(S, Dcat)
        n = S.shape[0]
        checked: list[complex] = []
        for value in np.linalg.eigvals(S):
            if value.real < lambda1:
                continue
            checked.append(complex(value))
            test = np.hstack([value * np.eye(n) - S, Dcat.astype(complex)])
            if self.engine.rank(test) < n:
                logger.info(f"Hautus test fails at eigenvalue {value:.6g}")
                return HautusVerdict(
                    stabilizable=False,
                    witness=complex(value),
                    checked=checked,
                    message=f"rank deficit at lambda = {value:.6g}",
                )
        return HautusVerdict(stabilizable=True, checked=checked)

    def kalman_decomposition(self, S, Dcat) -> DecompositionResult:
        """Orthogonal J with J^{-1} S J = [[S1, S2], [0, S3]] and J^{-1} D = [Dtilde; 0].

        J comes from the left singular vectors of the Kalman matrix; each column
        is signed so that its largest-magnitude entry is positive.
        """
        S, Dcat = self._pair(S, Dcat)
        n = S.shape[0]
        kalman = self.kalman_matrix(S, Dcat)
        n1 = self.engine.rank(kalman)
        if n1 == n:
            return DecompositionResult(
                J=np.eye(n),
                S1=S,
                S2=np.zeros((n, 0)),
                S3=np.zeros((0, 0)),
                Dtilde=Dcat,
                n1=n,
                fully_controllable=True,
            )

        U, _, _ = np.linalg.svd(kalman)
        pivots = np.argmax(np.abs(U), axis=0)
        J = U * np.sign(U[pivots, np.arange(n)])
        T = J.T @ S @ J
        return DecompositionResult(
            J=J,
            S1=T[:n1, :n1],
            S2=T[:n1, n1:],
            S3=T[n1:, n1:],
            Dtilde=(J.T @ Dcat)[:n1],
            n1=n1,
        )

    def d_E(self, E) -> float:
        """min pi / |Im lambda| over eigenvalues with nonzero imaginary part, else inf."""
        E = self._square(E, "E")
        values = np.linalg.eigvals(E)
        threshold = 1e-12 * max(1.0, self.engine.opnorm(E))
        imaginary = np.abs(values.imag)
        imaginary = imaginary[imaginary > threshold]
        if imaginary.size == 0:
            return math.inf
        return float(math.pi / imaginary.max())

    def q_EF(self, E, F) -> int:
        """max over columns f of F of dim span{f, E f, ..., E^{k-1} f}."""
        E, F = self._pair(E, F)
        if not np.any(F):
            logger.warning("q(E, F) requested for F = 0")
            return 0
        return max(self.engine.rank(self.kalman_matrix(E, F[:, [c]])) for c in range(F.shape[1]))

    # ------------------------------------------------------------------
    # Schedules
    # ------------------------------------------------------------------

    def _window_count(self, schedule: PeriodicSchedule, s: float, width: float, tol: float) -> int:
        """Number of instants tau_j, j >= 1, in the open window (s, s + width)."""
        count, j = 0, 1
        while True:
            tau = schedule.instant(j)
            if tau >= s + width - tol:
                return count
            if tau > s + tol:
                count += 1
            j += 1

    def schedule_in_class(
        self, schedule: PeriodicSchedule, S, Dcat, hbar: int | None = None
    ) -> ScheduleClassReport:
        """Check Card((s, s + d_S) and {tau_j}) >= hbar q + 2 for every s >= 0.

        The count is periodic in s with period t_hbar and attains its minimum at
        s = 0 or at an instant, so only those left endpoints are evaluated.
        """
        if hbar is not None and hbar != schedule.hbar:
            raise DimensionMismatchError("hbar", schedule.hbar, hbar)
        S, Dcat = self._pair(S, Dcat)
        width = self.d_E(S)
        q = self.q_EF(S, Dcat)
        required = schedule.hbar * q + 2
        if math.isinf(width):
            return ScheduleClassReport(
                d_E=width, q_EF=q, admissible=True, min_window_count=None, required=required
            )

        tol = 1e-12 * max(schedule.period, width)
        critical = [0.0]
        j = 1
        while (tau := schedule.instant(j)) <= schedule.period + width:
            critical.append(tau)
            j += 1
        minimum = min(self._window_count(schedule, s, width, tol) for s in critical)
        return ScheduleClassReport(
            d_E=width,
            q_EF=q,
            admissible=minimum >= required,
            min_window_count=minimum,
            required=required,
        )

    def generate_admissible_schedule(
        self, S, Dcat, hbar: int, period_hint: float = 1.0
    ) -> PeriodicSchedule:
        """Uniform schedule with spacing 0.9 d_S / (hbar q + 3), or period_hint / hbar."""
        if hbar < 1:
            raise InvalidParameterError("hbar", hbar, ">= 1")
        width = self.d_E(S)
        if math.isinf(width):
            return PeriodicSchedule.uniform(period_hint / hbar, hbar)
        q = self.q_EF(S, Dcat)
        step = 0.9 * width / (hbar * q + 3)
        schedule = PeriodicSchedule.uniform(step, hbar)
        while not self.schedule_in_class(schedule, S, Dcat).admissible:
            step /= 2
            schedule = PeriodicSchedule.uniform(step, hbar)
        return schedule

    def span_equality_check(self, E, F, taus) -> SpanEqualityReport:
        """Compare span{e^{-E tau_i} F} with the Krylov span of (E, F)."""
        E, F = self._pair(E, F)
        taus = [float(t) for t in taus]
        if not taus or any(b <= a for a, b in zip(taus, taus[1:], strict=False)):
            raise ScheduleError("taus must be a non-empty strictly increasing list")
        violated = taus[-1] - taus[0] >= self.d_E(E)
        if violated:
            logger.warning("tau span reaches d_E; span equality is not guaranteed")

        sampled = np.hstack([expm(-E * tau) @ F for tau in taus])
        kalman = self.kalman_matrix(E, F)
        rank_sampled = self.engine.rank(sampled)
        rank_kalman = self.engine.rank(kalman)
        joint = self.engine.rank(np.hstack([sampled, kalman]))
        return SpanEqualityReport(
            equal=rank_sampled == rank_kalman == joint,
            rank_sampled=rank_sampled,
            rank_kalman=rank_kalman,
            precondition_violated=violated,
        )

    def sampled_rank(self, S, D: list, schedule: PeriodicSchedule, khat: int) -> int:
        """rank(e^{-S t_1} D_nu(1), ..., e^{-S t_khat} D_nu(khat))."""
        S = self._square(S, "S")
        blocks = [
            expm(-S * schedule.instant(j)) @ np.atleast_2d(D[schedule.nu(j) - 1])
            for j in range(1, khat + 1)
        ]
        return self.engine.rank(np.hstack(blocks))

    # ------------------------------------------------------------------
    # Verdicts
    # ------------------------------------------------------------------

    def verdict_cross_check(
        self,
        cfg: HeatConfig,
        schedule: PeriodicSchedule,
        weights: CostWeights | None = None,
        tol: float | None = None,
    ) -> CrossCheckReport:
        """Compare the Hautus verdict with value iteration on the N-mode truncation.

        A positive verdict must come with a converged Riccati solution whose
        feedback decays. A negative one must come with divergence, and the
        uncontrolled first-mode coordinate must grow like e^{(Re lambda0 - lambda1) t}
        under an arbitrary feedback.
        """
        hautus = self.hautus_verdict(cfg.S, cfg.Dcat)
        system = self.build_heat_system(cfg, schedule)
        weights = weights or CostWeights.identity(system)
        solution = self.riccati.periodic_riccati_solve(system, weights, tol=tol)
        converged = not isinstance(solution, NotStabilizable)

        if hautus.stabilizable:
            if not converged:
                return self._disagreement(hautus, cfg, "Hautus test passes but value iteration diverged")
            feedback = self.riccati.synthesize_feedback(system, weights, solution)
            radius = self.dynamics.spectral_radius(self.dynamics.monodromy(system, feedback))
            x0 = np.ones(system.state_dim) / math.sqrt(system.state_dim)
            trajectory = self.dynamics.simulate_closed_loop(system, feedback, x0, _CROSS_CHECK_PERIODS)
            fit = self.dynamics.decay_rate_fit(trajectory)
            agree = radius < 1.0 and fit.stable
            report = CrossCheckReport(
                hautus=hautus,
                riccati_converged=True,
                spectral_radius=radius,
                decay_rate=fit.mu,
                agree=agree,
                N=cfg.N,
                message=None if agree else "synthesized feedback does not stabilize",
            )
        else:
            if converged:
                return self._disagreement(hautus, cfg, "Hautus test fails but value iteration converged")
            growth, expected = self._uncontrolled_growth(cfg, schedule, system, hautus.witness)
            agree = growth > 0.0 if expected > 0.0 else True
            report = CrossCheckReport(
                hautus=hautus,
                riccati_converged=False,
                growth_rate=growth,
                expected_growth_rate=expected,
                agree=agree,
                N=cfg.N,
            )

        if not report.agree:
            logger.error(f"Heat verdicts disagree: {report.message}")
        else:
            logger.info(
                f"Heat verdicts agree: {'stabilizable' if hautus.stabilizable else 'not stabilizable'}"
            )
        return report

    def _disagreement(self, hautus: HautusVerdict, cfg: HeatConfig, message: str) -> CrossCheckReport:
        logger.error(message)
        return CrossCheckReport(
            hautus=hautus,
            riccati_converged=not hautus.stabilizable,
            agree=False,
            N=cfg.N,
            message=message,
        )

    def _uncontrolled_growth(
        self,
        cfg: HeatConfig,
        schedule: PeriodicSchedule,
        system: ImpulseSystem,
        witness: complex | None,
    ) -> tuple[float, float]:
        """Measured and expected growth rate of the uncontrolled first-mode coordinate."""
        decomposition = self.kalman_decomposition(cfg.S, cfg.Dcat)
        n, n1 = cfg.n, decomposition.n1
        values, vectors = np.linalg.eig(decomposition.S3)
        index = int(np.argmax(values.real))
        xi = np.real(vectors[:, index])
        if not np.any(xi):
            xi = np.imag(vectors[:, index])
        expected = float(values[index].real) - LAMBDA1
        if witness is not None:
            expected = max(expected, witness.real - LAMBDA1)

        x0 = np.zeros(system.state_dim)
        x0[:n] = decomposition.J @ np.concatenate([np.zeros(n1), xi])

        # arbitrary feedback, scaled to ||B_k F_k|| <= 0.1
        rng = self.engine.rng()
        gains = []
        for B in system.inputs:
            F = rng.standard_normal((system.input_dim, system.state_dim))
            gains.append(0.1 * F / max(1e-300, self.engine.opnorm(B) * self.engine.opnorm(F)))
        periods = max(1, math.ceil(_GROWTH_TIME / schedule.period))
        trajectory = self.dynamics.simulate_closed_loop(system, FeedbackLaw(gains=gains), x0, periods)

        lower = decomposition.J.T[n1:]
        start = float(np.linalg.norm(lower @ x0[:n]))
        end = float(np.linalg.norm(lower @ trajectory.post[-1, :n]))
        growth = math.log(end / start) / trajectory.times[-1]
        logger.debug(f"Uncontrolled coordinate grows at {growth:.4f} (expected {expected:.4f})")
        return growth, expected
