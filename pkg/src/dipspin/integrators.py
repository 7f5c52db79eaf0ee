"""Explicit Runge-Kutta steppers used by :mod:`dipspin.dynamics`.

Three schemes are available: classical RK4 (fixed step), and the embedded
pairs Runge-Kutta-Fehlberg 4(5) and Dormand-Prince 5(4), which can run with
either a fixed step or local error control.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

Rhs = Callable[[float, np.ndarray], np.ndarray]


class Integrator(str, Enum):
    RK4 = "RK4"
    RKF45 = "RKF45"
    DP54 = "DP54"


@dataclass(frozen=True)
class Tableau:
    c: tuple[float, ...]
    a: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]  # propagated solution
    b_err: Optional[tuple[float, ...]] = None  # b - b_hat, for the error estimate
    order: int = 4  # order of the error estimate's lower member, for step control


RK4_TABLEAU = Tableau(
    c=(0.0, 0.5, 0.5, 1.0),
    a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
    b=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
)

_RKF_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_RKF_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)

RKF45_TABLEAU = Tableau(
    c=(0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2),
    a=(
        (),
        (1 / 4,),
        (3 / 32, 9 / 32),
        (1932 / 2197, -7200 / 2197, 7296 / 2197),
        (439 / 216, -8.0, 3680 / 513, -845 / 4104),
        (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
    ),
    b=_RKF_B4,
    b_err=tuple(p - q for p, q in zip(_RKF_B4, _RKF_B5)),
    order=4,
)

_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (
    5179 / 57600,
    0.0,
    7571 / 16695,
    393 / 640,
    -92097 / 339200,
    187 / 2100,
    1 / 40,
)

DP54_TABLEAU = Tableau(
    c=(0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0),
    a=(
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ),
    b=_DP_B5,
    b_err=tuple(p - q for p, q in zip(_DP_B5, _DP_B4)),
    order=4,
)

TABLEAUS = {
    Integrator.RK4: RK4_TABLEAU,
    Integrator.RKF45: RKF45_TABLEAU,
    Integrator.DP54: DP54_TABLEAU,
}


def rk_step(tab: Tableau, f: Rhs, t: float, y: np.ndarray, h: float):
    """One explicit RK step. Returns ``(y_new, err)``; ``err`` is None without an embedded pair."""
    ks = []
    for i, ci in enumerate(tab.c):
        yi = y
        for aij, kj in zip(tab.a[i], ks):
            if aij != 0.0:
                yi = yi + (h * aij) * kj
        ks.append(f(t + ci * h, yi))
    y_new = y
    for bi, ki in zip(tab.b, ks):
        if bi != 0.0:
            y_new = y_new + (h * bi) * ki
    err = None
    if tab.b_err is not None:
        err = np.zeros_like(y)
        for ei, ki in zip(tab.b_err, ks):
            if ei != 0.0:
                err = err + (h * ei) * ki
    return y_new, err


class StepSizeError(RuntimeError):
    pass


def advance(
    tab: Tableau,
    f: Rhs,
    t0: float,
    y0: np.ndarray,
    t1: float,
    h: float,
    rtol: Optional[float] = None,
    atol: float = 0.0,
    h_min: float = 1e-14,
    max_steps: int = 10_000_000,
):
    """Integrate from ``t0`` to exactly ``t1``.

    Without ``rtol`` this takes equal fixed steps no longer than ``h``. With
    ``rtol`` the embedded pair adapts the step, starting from ``h``; the
    returned second value is the suggested next step so callers can chain
    segments without restarting the controller.
    """
    span = t1 - t0
    if span <= 0:
        return y0, h
    if rtol is None or tab.b_err is None:
        n = max(1, int(np.ceil(span / h - 1e-9)))
        step = span / n
        y = y0
        for i in range(n):
            y, _ = rk_step(tab, f, t0 + i * step, y, step)
        return y, h

    t, y = t0, y0
    expo = -1.0 / (tab.order + 1)
    for _ in range(max_steps):
        remaining = t1 - t
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            return y, h
        trial = min(h, remaining)
        y_new, err = rk_step(tab, f, t, y, trial)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0:
            t = t1 if trial == remaining else t + trial
            y = y_new
            grow = 5.0 if ratio == 0.0 else min(5.0, 0.9 * ratio**expo)
            # only let the controller grow from a step it actually chose
            if trial == h or grow < 1.0:
                h = trial * max(grow, 0.2)
        else:
            h = trial * max(0.2, 0.9 * ratio**expo)
            if h < h_min:
                raise StepSizeError(f"step size underflow at t={t:.6g} (h={h:.3g})")
    raise StepSizeError(f"exceeded {max_steps} steps before t={t1}")
