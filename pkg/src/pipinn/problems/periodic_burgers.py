"""Method-of-lines solver for forced viscous Burgers on the periodic unit
interval: fourth-order central differences in space (skew-symmetric
advection), classical RK4 in time."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import CflViolation, NonFiniteSolution

# RK4 real-axis and imaginary-axis stability limits, with margin.
_DIFF_LIMIT = 2.78 * 0.8
_ADV_LIMIT = 2.82 * 0.8
_GROWTH_MARGIN = 1.5


def _pad(u):
    return np.concatenate((u[-2:], u, u[:2]))


def _dx(up, h):
    return (8.0 * (up[3:-1] - up[1:-3]) - (up[4:] - up[:-4])) / (12.0 * h)


def _dxx(up, h):
    return (16.0 * (up[3:-1] + up[1:-3]) - (up[4:] + up[:-4]) - 30.0 * up[2:-2]) / (12.0 * h * h)


def _rhs(u, t, x, h, gamma, source):
    up = _pad(u)
    adv = (_dx(up * up, h) + u * _dx(up, h)) / 3.0
    return gamma * _dxx(up, h) - adv + source(x, t)


def solve_periodic_burgers(initial: Callable, source: Callable, gamma: float,
                           nx_out: int, t_out, refinement: int = 16) -> np.ndarray:
    """Solve on ``[0, 1)`` and return the solution on ``nx_out`` equispaced
    points of ``[0, 1]`` (last point = periodic copy of the first) at the
    times ``t_out`` (which must start at 0 and be equispaced).

    ``initial(x)`` and ``source(x, t)`` are evaluated on the refined grid.
    """
    t_out = np.asarray(t_out, dtype=np.float64)
    cells_out = nx_out - 1
    m = cells_out * int(refinement)
    h = 1.0 / m
    x = np.arange(m) * h
    u = np.asarray(initial(x), dtype=np.float64).copy()
    out = np.empty((len(t_out), nx_out))

    def store(k, field):
        coarse = field[::refinement]
        out[k, :cells_out] = coarse
        out[k, cells_out] = coarse[0]

    store(0, u)
    diff_eig = 16.0 / (3.0 * h * h)
    adv_eig = 1.3722 / h
    for k in range(1, len(t_out)):
        t0, t1 = t_out[k - 1], t_out[k]
        umax = max(float(np.max(np.abs(u))), 1e-12) * _GROWTH_MARGIN
        dt_max = min(_DIFF_LIMIT / (gamma * diff_eig) if gamma > 0 else np.inf,
                     _ADV_LIMIT / (adv_eig * umax))
        n = max(1, int(np.ceil((t1 - t0) / dt_max)))
        dt = (t1 - t0) / n
        for j in range(n):
            t = t0 + j * dt
            k1 = _rhs(u, t, x, h, gamma, source)
            k2 = _rhs(u + 0.5 * dt * k1, t + 0.5 * dt, x, h, gamma, source)
            k3 = _rhs(u + 0.5 * dt * k2, t + 0.5 * dt, x, h, gamma, source)
            k4 = _rhs(u + dt * k3, t + dt, x, h, gamma, source)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise NonFiniteSolution(f"solution blew up before t={t1:g}")
        if np.max(np.abs(u)) > umax:
            raise CflViolation(f"|u| grew past the step-size bound during [{t0:g}, {t1:g}]")
        store(k, u)
    return out
