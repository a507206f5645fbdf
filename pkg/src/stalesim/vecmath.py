"""Flat dense parameter vectors and the arithmetic every optimizer step uses.

A :class:`ParamVector` is a float64 vector with a per-element parameter-group
tag (weight matrices vs. bias-like parameters), so that group-masked
operations such as weight decay stay pure vector arithmetic.  All operations
are value-semantics, deterministic, and check results for NaN/Inf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, VectorLengthError

__all__ = ["ParamVector", "hadamard", "axpy", "scale", "l2_norm"]


@dataclass(frozen=True)
class ParamVector:
    """Immutable flat vector of model parameters (or gradients, updates, ...).

    ``group_ids`` has the same length as ``values`` and tags each element with
    a small-integer parameter group.  Group ids never change after
    construction; arithmetic results inherit them from the left operand.
    """

    values: np.ndarray
    group_ids: np.ndarray = field(repr=False)

    def __init__(self, values, group_ids=None):
        vals = np.array(values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError(f"ParamVector values must be 1-D, got shape {vals.shape}")
        if group_ids is None:
            gids = np.zeros(vals.shape[0], dtype=np.int32)
        elif (
            isinstance(group_ids, np.ndarray)
            and group_ids.dtype == np.int32
            and not group_ids.flags.writeable
        ):
            gids = group_ids  # already one of ours: share, it is frozen
        else:
            gids = np.array(group_ids, dtype=np.int32)
        if gids.shape != vals.shape:
            raise VectorLengthError(
                f"group_ids length {gids.shape[0]} != values length {vals.shape[0]}"
            )
        vals.setflags(write=False)
        gids.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "group_ids", gids)
        if not np.isfinite(vals).all():
            raise NonFiniteError("ParamVector contains NaN or Inf")

    def __len__(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.group_ids)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        """Same group tags, new values (validated)."""
        return ParamVector(values, self.group_ids)

    def __add__(self, other: "ParamVector") -> "ParamVector":
        _check_lengths(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        _check_lengths(self, other)
        return self.with_values(self.values - other.values)

    def __neg__(self) -> "ParamVector":
        return self.with_values(-self.values)


def _check_lengths(a: ParamVector, b: ParamVector) -> None:
    if len(a) != len(b):
        raise VectorLengthError(f"vector lengths differ: {len(a)} vs {len(b)}")


def hadamard(a: ParamVector, b: ParamVector) -> ParamVector:
    """Component-wise product ``out[k] = a[k] * b[k]``; group tags from ``a``."""
    _check_lengths(a, b)
    return a.with_values(a.values * b.values)


def axpy(alpha: float, x: ParamVector, y: ParamVector) -> ParamVector:
    """``alpha * x + y`` with group tags from ``x``."""
    _check_lengths(x, y)
    return x.with_values(alpha * x.values + y.values)


def scale(alpha: float, x: ParamVector) -> ParamVector:
    """``alpha * x``."""
    return x.with_values(alpha * x.values)


def l2_norm(x: ParamVector) -> float:
    """Euclidean norm; zero iff all elements are zero.

    Uses numpy's pinned (pairwise) accumulation, which is bit-deterministic
    for a fixed input shape.
    """
    return float(np.sqrt(np.dot(x.values, x.values)))
