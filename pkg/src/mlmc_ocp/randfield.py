"""Truncated Karhunen-Loeve lognormal diffusion coefficient.

The exponent is a finite sum of separable trigonometric modes

    kappa(x) = sum_m amp_m * trig1_m(f1_m x1) * trig2_m(f2_m x2) * Y_m

with Y_m i.i.d. standard normal, and the coefficient is a = exp(kappa).
Draws are keyed on ``(master_seed, stream, sample_id)`` through a Philox
counter-based generator, so any sample can be reproduced in isolation and
the result does not depend on how samples are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "KLMode",
    "KLBasis",
    "PAPER_BASIS",
    "CoefficientSample",
    "draw_sample",
    "evaluate_coeff",
    "field_extrema",
    "make_basis",
]

FREQ_LOW = 0.42 * np.pi
FREQ_HIGH = 1.17 * np.pi
_TRIG = {"cos": np.cos, "sin": np.sin}
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class KLMode:
    amplitude: float
    trig1: str
    freq1: float
    trig2: str
    freq2: float

    def __post_init__(self):
        if self.trig1 not in _TRIG or self.trig2 not in _TRIG:
            raise ValueError(f"trig must be 'cos' or 'sin', got {self.trig1}/{self.trig2}")

    def shape(self, points: np.ndarray) -> np.ndarray:
        return (
            _TRIG[self.trig1](self.freq1 * points[..., 0])
            * _TRIG[self.trig2](self.freq2 * points[..., 1])
        )


@dataclass(frozen=True)
class KLBasis:
    modes: tuple[KLMode, ...]

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([m.amplitude for m in self.modes])

    def design(self, points: np.ndarray) -> np.ndarray:
        """Matrix of ``amplitude * shape`` with one column per mode."""
        points = np.asarray(points, dtype=float)
        return np.stack([m.amplitude * m.shape(points) for m in self.modes], axis=-1)


def make_basis(
    amplitudes=(0.84, 0.45, 0.45, 0.25),
    freq_low: float = FREQ_LOW,
    freq_high: float = FREQ_HIGH,
) -> KLBasis:
    """Four-mode basis in the cos/cos, cos/sin, sin/cos, sin/sin pattern."""
    if len(amplitudes) != 4:
        raise ValueError("the four-mode pattern needs exactly 4 amplitudes")
    pattern = [
        ("cos", freq_low, "cos", freq_low),
        ("cos", freq_low, "sin", freq_high),
        ("sin", freq_high, "cos", freq_low),
        ("sin", freq_high, "sin", freq_high),
    ]
    return KLBasis(
        tuple(KLMode(float(a), *spec) for a, spec in zip(amplitudes, pattern))
    )


PAPER_BASIS = make_basis()


@dataclass(frozen=True, eq=False)
class CoefficientSample:
    """One realisation of the coefficient: the normal weights plus the basis."""

    y: np.ndarray
    basis: KLBasis = PAPER_BASIS
    sample_id: int = 0
    stream: int = 0

    def log_coeff(self, points: np.ndarray) -> np.ndarray:
        return self.basis.design(points) @ self.y

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_coeff(points))

    def upper_bound(self) -> float:
        """exp(sum |amp_m| |y_m|), a bound on a over the whole domain."""
        return float(np.exp(np.abs(self.basis.amplitudes) @ np.abs(self.y)))


def fixed_sample(y, basis: KLBasis = PAPER_BASIS) -> CoefficientSample:
    """Sample with prescribed weights (``y = 0`` gives a == 1)."""
    return CoefficientSample(np.asarray(y, dtype=float), basis, sample_id=-1, stream=-1)


def _uniforms(master_seed: int, stream: int, sample_id: int, n: int) -> np.ndarray:
    key = [master_seed & _U64, stream & _U64]
    # the generator increments word 0, so the id in word 1 keeps samples disjoint
    bits = np.random.Philox(key=key, counter=[0, sample_id & _U64, 0, 0]).random_raw(n)
    # 53 high bits, shifted to the open interval (0, 1)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def draw_sample(
    master_seed: int,
    sample_id: int,
    stream: int = 0,
    basis: KLBasis = PAPER_BASIS,
) -> CoefficientSample:
    """Standard-normal KL weights for ``sample_id`` in the given stream.

    Pure function of its arguments.  Normals come from the inverse normal CDF
    applied to Philox output, keyed by ``(master_seed, stream)`` with
    ``sample_id`` as the second counter word.
    """
    if sample_id < 0 or master_seed < 0 or stream < 0:
        raise ValueError("seeds, streams and sample ids must be nonnegative")
    y = ndtri(_uniforms(master_seed, stream, sample_id, len(basis)))
    return CoefficientSample(y, basis, sample_id=sample_id, stream=stream)


def evaluate_coeff(sample: CoefficientSample, points) -> np.ndarray:
    return sample(np.asarray(points, dtype=float))


def field_extrema(sample: CoefficientSample, probe_grid_resolution: int = 65) -> tuple[float, float]:
    """Min and max of a over a uniform probe grid of the closed square.

    Diagnostic only, never used inside a solve.
    """
    if probe_grid_resolution < 2:
        raise ValueError("probe grid needs at least 2 points per direction")
    t = np.linspace(-0.5, 0.5, probe_grid_resolution)
    X1, X2 = np.meshgrid(t, t, indexing="ij")
    values = sample(np.stack([X1.ravel(), X2.ravel()], axis=1))
    return float(values.min()), float(values.max())
