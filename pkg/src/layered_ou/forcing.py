"""Exogenous forcing series (e.g. a temperature indicator over time).

Values are interpolated linearly between sample points and held constant
at the nearest endpoint outside the sampled range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DuplicateTime


@dataclass(frozen=True)
class ForcingSeries:
    times: np.ndarray  # My, strictly increasing
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("forcing needs matching 1-d times and values")
        if not (np.isfinite(t).all() and np.isfinite(v).all()):
            raise ValueError("forcing series must be finite")
        if t.size > 1 and not (np.diff(t) > 0).all():
            if (np.diff(t) == 0).any():
                raise DuplicateTime("forcing series has duplicated time points")
            raise ValueError("forcing times must be increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def start(self) -> float:
        return float(self.times[0])

    def value_at(self, t):
        """Piecewise-linear value, constant outside the sampled range."""
        return np.interp(t, self.times, self.values)

    def segments(self, t0: float, t1: float):
        """Linear segments covering [t0, t1] as arrays (a, b, va, vb).

        Break points are the interior sample times; the interpolant is
        linear on each returned piece (constant beyond the range ends).
        """
        if t1 <= t0:
            return (np.empty(0),) * 4
        inner = self.times[(self.times > t0) & (self.times < t1)]
        knots = np.concatenate(([t0], inner, [t1]))
        vals = np.interp(knots, self.times, self.values)
        return knots[:-1], knots[1:], vals[:-1], vals[1:]
