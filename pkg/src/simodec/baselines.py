"""Suboptimal comparison detectors: pilot-based LS/MMSE channel estimation
with coherent per-symbol detection, and the iterative joint scheme that
re-estimates the channel from detected data.

With a single unit-modulus pilot the LS estimate is x_pilot * conj(pilot)
and the linear MMSE estimate shrinks it by 1/(1 + noise_var) under the
unit-variance channel prior.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import Constellation, quantize_many

__all__ = [
    "Estimator",
    "BaselineKind",
    "pilot_estimate",
    "coherent_detect",
    "iterative_detect",
]


class Estimator(enum.Enum):
    LS = "ls"
    MMSE = "mmse"


@dataclass(frozen=True)
class BaselineKind:
    estimator: Estimator
    iterative: bool
    iterations: int = 100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def pilot_estimate(
    x_pilot: np.ndarray,
    pilot_symbol: complex,
    noise_var: float,
    estimator: Estimator,
) -> np.ndarray:
    """Channel estimate from the single pilot observation column.

    The pilot column is conj(pilot) * h + noise, so the unit-modulus LS
    inverse multiplies by the pilot symbol itself.
    """
    x_pilot = np.asarray(x_pilot, dtype=np.complex128)
    h = x_pilot * pilot_symbol
    if estimator is Estimator.MMSE:
        h = h / (1.0 + noise_var)
    return h


def coherent_detect(
    X: np.ndarray,
    h_hat: np.ndarray,
    constellation: Constellation,
    pilot_index: int,
    pilot_symbol: complex,
) -> np.ndarray:
    """Per-symbol ML detection given a channel estimate.

    Matched-filters each column and quantizes; the pilot position is kept
    fixed, never re-detected.
    """
    X = np.asarray(X, dtype=np.complex128)
    h_hat = np.asarray(h_hat, dtype=np.complex128)
    energy = float(np.vdot(h_hat, h_hat).real)
    if energy <= 0:
        raise ValueError("channel estimate must be nonzero")
    # X[n, t] = h[n] * conj(s[t]) + noise, so the matched filter for s_t is
    # conj of the combined column.
    z = np.conj(h_hat.conj() @ X) / energy
    s_hat = quantize_many(z, constellation)
    s_hat[pilot_index] = pilot_symbol
    return s_hat


def iterative_detect(
    X: np.ndarray,
    pilot_index: int,
    pilot_symbol: complex,
    constellation: Constellation,
    noise_var: float,
    estimator: Estimator,
    iterations: int = 100,
    strict_iterations: bool = False,
) -> np.ndarray:
    """Alternating channel re-estimation and coherent detection.

    Starts from the pilot-only estimate; each round detects with the current
    estimate, then refits the channel to the detected sequence (LS: X s /
    ||s||^2; MMSE: X s / (||s||^2 + noise_var)).  Exits early once the
    detected sequence repeats, unless strict_iterations forces the full
    iteration count.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    X = np.asarray(X, dtype=np.complex128)
    h_hat = pilot_estimate(X[:, pilot_index], pilot_symbol, noise_var, estimator)
    prev: np.ndarray | None = None
    for _ in range(iterations):
        s_hat = coherent_detect(X, h_hat, constellation, pilot_index, pilot_symbol)
        if prev is not None and not strict_iterations and np.array_equal(s_hat, prev):
            break
        prev = s_hat
        denom = float(np.vdot(s_hat, s_hat).real)
        if estimator is Estimator.MMSE:
            denom += noise_var
        h_hat = X @ s_hat / denom
    return prev if prev is not None else s_hat
