"""Experiment records and log-log exponent fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPoints, NonPositiveValue


@dataclass
class ExperimentRecord:
    """One measured value.  ``r`` is the size parameter x."""

    experiment: str
    k: int
    r: float
    value: float
    method: str
    sample_id: int = 0
    delta: float = 0.0
    runtime_ms: float = 0.0
    extra: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    residual: float
    n_used: int

    def __iter__(self):
        return iter((self.slope, self.intercept, self.residual))


def fit_exponent(points) -> ExponentFit:
    """Least-squares slope of log y against log x.

    The two smallest x are dropped when at least five points are given.
    ``residual`` is the largest absolute log-residual of the used points.
    """
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 3:
        raise InsufficientPoints(f"need at least 3 points, got {len(pts)}")
    xs = [p[0] for p in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("x values must be strictly increasing")
    if any(x <= 0 or y <= 0 or not math.isfinite(y) for x, y in pts):
        raise NonPositiveValue("log-log fitting needs positive finite values")
    if len(pts) >= 5:
        pts = pts[2:]
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return ExponentFit(float(slope), float(intercept), res, len(pts))


def fit_affine(points) -> tuple[float, float, float]:
    """Least-squares line y = a + b x; returns (a, b, max abs residual)."""
    xs = np.asarray([p[0] for p in points], dtype=float)
    ys = np.asarray([p[1] for p in points], dtype=float)
    if len(xs) < 2:
        raise InsufficientPoints("need at least 2 points for a line")
    b, a = np.polyfit(xs, ys, 1)
    return float(a), float(b), float(np.max(np.abs(ys - (a + b * xs))))
