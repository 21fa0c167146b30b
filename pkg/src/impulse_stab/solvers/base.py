"""Base class for solver groups sharing one engine."""

import logging

import numpy as np

from ..engine import Engine
from ..exceptions import DimensionMismatchError
from ..models.system import ImpulseSystem

logger = logging.getLogger(__name__)


class BaseSolver:
    """Base class for all solver groups."""

    def __init__(self, engine: Engine):
        """Initialize the solver group.

        Args:
            engine: Shared numerics engine
        """
        self.engine = engine

    @property
    def settings(self):
        return self.engine.settings

    @staticmethod
    def _state(system: ImpulseSystem, x0, what: str = "x0") -> np.ndarray:
        return system.check_state(x0, what)

    @staticmethod
    def _square(M, what: str = "matrix") -> np.ndarray:
        array = np.atleast_2d(np.asarray(M, dtype=float))
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise DimensionMismatchError(what, "square matrix", array.shape)
        return array

    @staticmethod
    def _flow_product(system: ImpulseSystem, start: int, stop: int) -> np.ndarray:
        """E_nu(stop) ... E_nu(start+1), the free flow from t_start+ to t_stop."""
        product = np.eye(system.state_dim)
        for j in range(start + 1, stop + 1):
            product = system.flow(j) @ product
        return product
