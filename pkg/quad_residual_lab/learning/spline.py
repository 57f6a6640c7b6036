"""Least-squares cubic splines used to smooth residual labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import BSpline, PPoly, make_lsq_spline

DEGREE = 3
MIN_POINTS_PER_SEGMENT = 4


@dataclass(frozen=True, eq=False)
class SmoothingSpline:
    """Vector-valued cubic B-spline fitted in the least-squares sense."""

    breakpoints: NDArray[np.float64]
    spline: BSpline

    @property
    def knots(self) -> NDArray[np.float64]:
        """Full knot vector including the repeated boundary knots."""
        return self.spline.t

    @property
    def channels(self) -> int:
        """Number of fitted channels."""
        c = self.spline.c
        return 1 if c.ndim == 1 else c.shape[1]

    def __call__(self, times: NDArray[np.float64], nu: int = 0) -> NDArray[np.float64]:
        """Evaluate (or differentiate nu times) at the given times."""
        return self.spline(np.asarray(times, dtype=np.float64), nu)

    def segments(self) -> List[PPoly]:
        """Per-channel piecewise cubic coefficients between breakpoints."""
        t, c, k = self.spline.tck
        coefficients = c.reshape(len(c), -1)
        return [PPoly.from_spline((t, coefficients[:, j], k)) for j in range(coefficients.shape[1])]


def spline_knots(start: float, end: float, spacing: float) -> NDArray[np.float64]:
    """Clamped cubic knot vector with interior knots every `spacing` seconds."""
    if spacing <= 0:
        raise ValueError("knot spacing must be positive")
    interior = np.arange(start + spacing, end, spacing)
    interior = interior[interior < end - 0.5 * spacing]
    return np.concatenate([[start] * (DEGREE + 1), interior, [end] * (DEGREE + 1)])


def fit_smoothing_spline(
    times: NDArray[np.float64],
    values: NDArray[np.float64],
    knot_spacing: float = 0.1,
) -> SmoothingSpline:
    """
    Fit the cubic spline (knots every knot_spacing) minimising the L2 error.

    Args:
        times: Strictly increasing sample times
        values: (N,) or (N, C) samples
        knot_spacing: Distance between interior knots (s)

    Returns:
        The fitted spline; C2 continuity holds by construction.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size == 0:
        raise ValueError("cannot fit a spline to empty data")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if len(values) != len(times):
        raise ValueError(f"{len(values)} values for {len(times)} times")

    knots = spline_knots(float(times[0]), float(times[-1]), knot_spacing)
    segments = len(knots) - 2 * DEGREE - 1
    if len(times) < MIN_POINTS_PER_SEGMENT * segments:
        raise ValueError(
            f"{len(times)} samples are too few for {segments} spline segments"
        )
    spline = make_lsq_spline(times, values, knots, k=DEGREE)
    return SmoothingSpline(breakpoints=np.unique(knots), spline=spline)
