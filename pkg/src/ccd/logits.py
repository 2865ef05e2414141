"""Numerically stable primitives over vocabulary-sized score vectors.

A logit vector is a 1-D float64 array. ``-inf`` is the canonical "banned
token" sentinel and survives every transform; ``+inf`` and NaN are hard
errors, never values.
"""
from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


class DegenerateLogitsError(ValueError):
    """Raised when a logit vector has no finite entry left."""


def as_logits(z) -> np.ndarray:
    """Validate and return ``z`` as a float64 logit vector.

    Rejects NaN and +inf; requires at least one finite entry.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"logit vector must be 1-D, got shape {z.shape}")
    if np.isnan(z).any():
        raise ValueError("NaN in logits")
    if np.isposinf(z).any():
        raise ValueError("+inf in logits")
    if not np.isfinite(z).any():
        raise DegenerateLogitsError("degenerate logits: all tokens banned")
    return z


def log_softmax(z) -> np.ndarray:
    """Shift-invariant log-softmax; banned entries stay banned."""
    z = as_logits(z)
    m = z.max()  # max is finite by validation
    shifted = z - m  # -inf - finite == -inf
    lse = m + np.log(np.exp(shifted).sum())
    return z - lse


def softmax(z) -> np.ndarray:
    """Stable softmax via max subtraction; banned entries get probability 0."""
    return np.exp(log_softmax(z))


def interpolate(a, b, weight: float) -> np.ndarray:
    """Affine blend ``(1-weight)*a + weight*b`` of two logit vectors.

    The endpoints return the surviving branch exactly, which gives the
    0*(-inf) == 0 convention: a zero weight fully drops that branch,
    including its bans.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"interpolation weight must be in [0, 1], got {weight}")
    if weight == 0.0:
        return a.copy()
    if weight == 1.0:
        return b.copy()
    return (1.0 - weight) * a + weight * b


def argmax(z) -> int:
    """Index of the maximum entry; ties broken by lowest token id."""
    return int(np.argmax(np.asarray(z, dtype=np.float64)))
