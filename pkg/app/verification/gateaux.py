from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from app import config
from app.models.schemas import ControlSignal

logger = logging.getLogger(__name__)


def table_norm(u: ControlSignal) -> float:
    """L2(0, T; L2) norm of a coefficient table, trapezoid in time."""
    per_time = np.sum(u.coeffs.reshape(u.times.size, -1) ** 2, axis=1)
    return math.sqrt(float(trapezoid(per_time, u.times)))


def random_direction(u: ControlSignal, rng: np.random.Generator) -> ControlSignal:
    """Gaussian spectral table on u's time grid, normalized to unit norm."""
    v = ControlSignal(times=u.times, domain=u.domain, coeffs=rng.standard_normal(u.coeffs.shape))
    return v.scaled(1.0 / table_norm(v))


def gateaux_gradient_norm(
    J: Callable[[ControlSignal], float],
    u: ControlSignal,
    directions: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """Largest central-difference directional derivative of J at u over random unit directions."""
    if u.is_rule:
        raise ValueError("sample the control on a time grid before probing derivatives")
    directions = config.DEFAULT_DIRECTIONS if directions is None else directions
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    eps = 1e-4 * (1.0 + table_norm(u))

    worst = 0.0
    for _ in range(directions):
        v = random_direction(u, rng)
        slope = (J(u.plus(v, eps)) - J(u.plus(v, -eps))) / (2.0 * eps)
        worst = max(worst, abs(slope))
    logger.debug("gateaux check: %d directions, max |dJ| = %.3e", directions, worst)
    return worst
