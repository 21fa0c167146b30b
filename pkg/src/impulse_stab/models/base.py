"""Base model classes and array field types."""

from typing import Annotated, Any

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _as_matrix(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {array.shape}")
    return _frozen(array)


def _as_vector(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {array.shape}")
    return _frozen(array)


def _to_list(array: np.ndarray) -> list:
    return array.tolist()


Matrix = Annotated[
    np.ndarray, BeforeValidator(_as_matrix), PlainSerializer(_to_list, return_type=list)
]
Vector = Annotated[
    np.ndarray, BeforeValidator(_as_vector), PlainSerializer(_to_list, return_type=list)
]


class ImpulseModel(BaseModel):
    """Base class for all domain models."""

    model_config = ConfigDict(
        arbitrary_types_allowed=True,
        frozen=True,
        extra="ignore",
        populate_by_name=True,
        ser_json_inf_nan="strings",
    )


class Verdict(ImpulseModel):
    """Base for yes/no analysis outcomes carrying diagnostics."""

    message: str | None = None
    diagnostics: dict[str, Any] = Field(default_factory=dict)
