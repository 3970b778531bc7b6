"""
Scalar Dynamic-Programming Oracle
---------------------------------
Exact backward recursion for the discrete per-mode problem

    x_{j+1} = (1 + a dt) x_j + dt u_j + dt f
    cost    = sum_j dt u_j^2 + w (x_J - c)^2

with value V_j(x) = S_j x^2 + 2 s_j x + sigma_j. The recursion is exact for
the discrete problem, so its only error against the continuous closed forms
is the O(dt) Euler discretization, which Richardson extrapolation removes.
"""

from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from app.models.schemas import DPResult, ScalarLQInstance

logger = logging.getLogger(__name__)


def scalar_lq_dp(inst: ScalarLQInstance) -> DPResult:
    n = inst.steps
    dt = inst.T / n
    alpha = 1.0 + inst.a * dt
    w, c, f = inst.terminal_weight, inst.target, inst.f

    S = np.empty(n + 1)
    s = np.empty(n + 1)
    sigma = np.empty(n + 1)
    S[n], s[n], sigma[n] = w, -w * c, w * c * c

    for j in range(n - 1, -1, -1):
        D = 1.0 + S[j + 1] * dt
        if D <= 0.0:
            logger.warning("discrete Riccati recursion breaks down at step %d of %d", j, n)
            return DPResult(
                steps=n,
                value=float("nan"),
                affine0=float("nan"),
                gains=S,
                offsets=s,
                trajectory=np.full(n + 1, np.nan),
                control=np.full(n, np.nan),
                blow_up=True,
                blow_up_step=j,
            )
        S[j] = alpha**2 * S[j + 1] / D
        s[j] = alpha * (S[j + 1] * dt * f + s[j + 1]) / D
        sigma[j] = S[j + 1] * dt**2 * f**2 / D + 2.0 * s[j + 1] * dt * f / D + sigma[j + 1] - dt * s[j + 1] ** 2 / D

    x = np.empty(n + 1)
    u = np.empty(n)
    x[0] = inst.x0
    for j in range(n):
        D = 1.0 + S[j + 1] * dt
        u[j] = -(S[j + 1] * (alpha * x[j] + dt * f) + s[j + 1]) / D
        x[j + 1] = alpha * x[j] + dt * u[j] + dt * f

    value = float(S[0] * inst.x0**2 + 2.0 * s[0] * inst.x0 + sigma[0])
    return DPResult(steps=n, value=value, affine0=float(s[0]), gains=S, offsets=s, trajectory=x, control=u)


def richardson_value(inst: ScalarLQInstance) -> Tuple[float, float]:
    """First-order extrapolation 2 V(2n) - V(n) of the value and of the affine term s_0."""
    coarse = scalar_lq_dp(inst)
    fine = scalar_lq_dp(inst.model_copy(update={"steps": 2 * inst.steps}))
    if coarse.blow_up or fine.blow_up:
        return float("nan"), float("nan")
    return 2.0 * fine.value - coarse.value, 2.0 * fine.affine0 - coarse.affine0


def dp_convergence_table(inst: ScalarLQInstance, levels: Sequence[int]) -> List[Tuple[int, float]]:
    """(steps, value) rows for each refinement level."""
    rows = []
    for steps in levels:
        result = scalar_lq_dp(inst.model_copy(update={"steps": int(steps)}))
        rows.append((int(steps), result.value))
    return rows
