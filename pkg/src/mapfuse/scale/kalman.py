from __future__ import annotations

import logging
from typing import Iterable, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapfuse.exceptions import InsufficientMatchesError, NumericalError

logger = logging.getLogger("mapfuse.scale")
logger.addHandler(logging.NullHandler())

NORM_EPSILON = 1e-12


class ScaleFilter:
    """Scalar Kalman filter over a static (or slowly drifting) scale.

    Without a prior the first measurement initializes the state with the measurement variance.
    """

    def __init__(
        self,
        process_var: float = 0.0,
        meas_var: float = 0.05**2,
        prior: Optional[Tuple[float, float]] = None,
    ) -> None:
        if process_var < 0 or meas_var <= 0:
            raise ValueError("process variance must be >= 0 and measurement variance > 0")
        self.process_var = float(process_var)
        self.meas_var = float(meas_var)
        self.mean: Optional[float] = None
        self.variance: Optional[float] = None
        if prior is not None:
            mean, var = prior
            if var <= 0:
                raise ValueError("prior variance must be positive")
            self.mean, self.variance = float(mean), float(var)
        self.variances: List[float] = []

    def update(self, measurement: float) -> float:
        if not np.isfinite(measurement):
            raise NumericalError(f"non-finite scale measurement {measurement!r}")
        if self.mean is None or self.variance is None:
            self.mean, self.variance = float(measurement), self.meas_var
        else:
            predicted = self.variance + self.process_var
            gain = predicted / (predicted + self.meas_var)
            self.mean = self.mean + gain * (measurement - self.mean)
            self.variance = (1.0 - gain) * predicted
        self.variances.append(self.variance)
        return self.mean

    def update_all(self, measurements: Iterable[float]) -> float:
        for m in measurements:
            self.update(float(m))
        if self.mean is None:
            raise InsufficientMatchesError("scale filter received no measurements")
        return self.mean


def depth_ratios(source: ArrayLike, target: ArrayLike) -> NDArray[np.float64]:
    """``|target_k| / |source_k|`` per correspondence."""
    s = np.asarray(source, dtype=float).reshape(-1, 3)
    t = np.asarray(target, dtype=float).reshape(-1, 3)
    if s.shape != t.shape:
        raise ValueError(f"correspondence sets differ in shape: {s.shape} vs {t.shape}")
    ns = np.linalg.norm(s, axis=1)
    if np.any(ns < NORM_EPSILON):
        raise NumericalError("source vector with vanishing norm in scale measurement")
    return np.linalg.norm(t, axis=1) / ns


def kalman_scale(
    source: ArrayLike,
    target: ArrayLike,
    process_var: float = 0.0,
    meas_var: float = 0.05**2,
    prior: Optional[Tuple[float, float]] = None,
) -> float:
    """Posterior mean of the scale after filtering every depth ratio in order."""
    ratios = depth_ratios(source, target)
    if ratios.size == 0:
        raise InsufficientMatchesError("kalman_scale needs at least one correspondence")
    sigma = ScaleFilter(process_var, meas_var, prior).update_all(ratios)
    if sigma <= 0:
        raise NumericalError(f"filtered scale is not positive: {sigma}")
    return sigma
