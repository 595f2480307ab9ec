"""Constellations, block-fading SIMO channel generation, and hard-decision
symbol quantization.

Conventions (fixed for every experiment table):
  * SNR in dB maps to noise variance as sigma2 = 10**(-snr_db/10); with unit
    symbol energy and unit-variance channel entries this is the per-receive-
    antenna SNR.
  * "complex Gaussian with variance v" means v/2 per real component.
  * The pilot symbol sits at the last position of the block and is fixed to
    the first constellation point by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "ObservationBlock",
    "BPSK",
    "QAM4",
    "get_constellation",
    "snr_to_noise_var",
    "generate_block",
    "quantize",
    "quantize_many",
]

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Constellation:
    """Ordered set of unit-modulus complex points.

    The enumeration order is part of the contract: it defines the candidate
    order of the tree search and the tie-break of :func:`quantize`.
    """

    name: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("constellation needs at least two points")
        if np.any(np.abs(np.abs(pts) - 1.0) > _UNIT_TOL):
            raise ValueError(f"{self.name}: points must have unit modulus")
        if len(set(pts.tolist())) != pts.size:
            raise ValueError(f"{self.name}: points must be distinct")

    def __len__(self) -> int:
        return int(self.points.size)

    def index_of(self, point: complex) -> int:
        d = np.abs(self.points - point)
        i = int(np.argmin(d))
        if d[i] > 1e-9:
            raise ValueError(f"{point} is not a {self.name} point")
        return i


BPSK = Constellation("BPSK", np.array([1.0, -1.0], dtype=np.complex128))

# Gray-adjacent circular order; frozen because it defines tree enumeration.
QAM4 = Constellation(
    "4-QAM",
    np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j], dtype=np.complex128) / math.sqrt(2.0),
)

_BY_NAME = {
    "BPSK": BPSK,
    "4-QAM": QAM4,
    "QPSK": QAM4,
}


def get_constellation(name: str) -> Constellation:
    try:
        return _BY_NAME[name.upper()]
    except KeyError:
        raise ValueError(
            f"unknown constellation {name!r}; available: {sorted(_BY_NAME)}"
        ) from None


def snr_to_noise_var(snr_db: float) -> float:
    """Noise variance sigma2 = 10**(-snr_db/10); +inf dB maps to 0."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class ObservationBlock:
    """One coherence block: X = h s^H + W, plus the ground truth for scoring."""

    X: np.ndarray           # N x T received matrix
    h_true: np.ndarray      # length-N channel vector
    s_true: np.ndarray      # length-T transmitted symbols (unit modulus)
    noise_var: float
    pilot_index: int        # last position
    pilot_symbol: complex

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]


def _complex_gaussian(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """i.i.d. circular complex Gaussian, zero mean, variance ``var`` per entry."""
    scale = math.sqrt(var / 2.0)
    return rng.normal(scale=scale, size=shape) + 1j * rng.normal(scale=scale, size=shape)


def generate_block(
    T: int,
    N: int,
    constellation: Constellation,
    noise_var: float,
    pilot_symbol: complex | None = None,
    rng: np.random.Generator | None = None,
) -> ObservationBlock:
    """Draw one block: unit-variance Rayleigh channel, uniform data symbols,
    a known pilot at the last position, and additive noise of the given
    variance per complex entry."""
    if T < 2 or N < 1:
        raise ValueError("need T >= 2 and N >= 1")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    if rng is None:
        rng = np.random.default_rng()
    if pilot_symbol is None:
        pilot_symbol = complex(constellation.points[0])
    constellation.index_of(pilot_symbol)  # raises if the pilot is foreign

    h = _complex_gaussian(rng, N, 1.0)
    s = constellation.points[rng.integers(0, len(constellation), size=T)].copy()
    s[T - 1] = pilot_symbol
    X = np.outer(h, s.conj())
    if noise_var > 0:
        X = X + _complex_gaussian(rng, (N, T), noise_var)
    return ObservationBlock(
        X=X,
        h_true=h,
        s_true=s,
        noise_var=float(noise_var),
        pilot_index=T - 1,
        pilot_symbol=complex(pilot_symbol),
    )


def quantize(y: complex, constellation: Constellation) -> complex:
    """Nearest constellation point; ties go to the lowest enumeration index."""
    return complex(constellation.points[int(np.argmin(np.abs(constellation.points - y)))])


def quantize_many(y: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Vectorized :func:`quantize` with the same tie-break."""
    y = np.asarray(y, dtype=np.complex128)
    idx = np.argmin(np.abs(y[..., None] - constellation.points), axis=-1)
    return constellation.points[idx]
