"""Dipole fields and integration of the dimensionless precession equations.

Moments are unit vectors ``e_l``; time is ``t~ = omega_d t``. In the lab frame

    de_l/dt~ = e_l x [(z + h) / p_d + H_l],    H_l = -sum_k (D_lk + J_lk) e_k

and in the frame rotating at the Larmor frequency, keeping only the secular
dipolar part,

    de_l/dt~ = e_l x H_l^s,
    H_l^s = (a/2 e^x, a/2 e^y, -a e^z) summed over partners.

A scheduled reversal ``(tau, k)`` multiplies the whole right-hand side by
``-k`` from ``tau`` onward, which runs the secular evolution backwards at
rate ``k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import CouplingTable, SpinSystem
from .integrators import TABLEAUS, Integrator, advance

log = logging.getLogger(__name__)

SECULAR_WEIGHTS = np.array([0.5, 0.5, -1.0])
DEFAULT_NORM_THRESHOLD = 1e-6


class Mode(str, Enum):
    LAB_FULL = "lab-full"
    ROTATING_SECULAR = "rotating-secular"


class NormDriftError(RuntimeError):
    """Moment lengths drifted past the configured threshold."""


@dataclass(frozen=True)
class Reversal:
    time: float
    factor: float = 1.0


DIPOLAR_STEP = 0.0025
LARMOR_STEPS = 400


def default_step(mode: Mode | str, p_d: float) -> float:
    """Fixed RK4 step that keeps moment norms within ~1e-9 over t~ = 10.

    In the rotating frame 0.0025 is enough for a dense N = 1000 lattice
    (0.005 drifts past 1e-8). In the lab frame the Larmor period must also be
    resolved: RK4 shrinks a pure rotation by about ``x^6 / 144`` per step of
    phase ``x``, so 50 steps per period lose ~1e-6 of norm per period while
    400 steps lose ~4e-11.
    """
    if Mode(mode) is Mode.LAB_FULL:
        return min(DIPOLAR_STEP, 2.0 * np.pi * p_d / LARMOR_STEPS)
    return DIPOLAR_STEP


@dataclass(frozen=True)
class SimPlan:
    """Everything :func:`integrate` needs besides the spins and couplings.

    ``dt`` defaults to :func:`default_step`. ``rtol`` switches the embedded
    integrators (RKF45, DP54) to adaptive stepping; output is still produced
    on the ``dt * sample_every`` grid. ``snapshot_every`` > 0 stores per-spin
    moments every that many output samples.
    """

    mode: Mode = Mode.ROTATING_SECULAR
    p_d: float = 0.01
    t_end: float = 10.0
    dt: Optional[float] = None
    h: tuple[float, float] = (0.0, 0.0)
    integrator: Integrator = Integrator.RK4
    reversals: tuple[Reversal, ...] = ()
    rtol: Optional[float] = None
    atol: float = 1e-12
    sample_every: int = 1
    snapshot_every: int = 0
    norm_threshold: float = DEFAULT_NORM_THRESHOLD

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "integrator", Integrator(self.integrator))
        revs = tuple(
            r if isinstance(r, Reversal) else Reversal(*r) for r in self.reversals
        )
        object.__setattr__(self, "reversals", revs)
        object.__setattr__(self, "h", tuple(float(x) for x in self.h))
        if self.dt is None:
            object.__setattr__(self, "dt", default_step(self.mode, self.p_d))
        if not self.p_d > 0:
            raise ValueError(f"p_d must be positive, got {self.p_d}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if len(self.h) != 2:
            raise ValueError("h must be a pair (h_x, h_y)")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.rtol is not None and self.integrator is Integrator.RK4:
            raise ValueError("adaptive stepping needs an embedded pair (RKF45 or DP54)")
        prev = 0.0
        for r in revs:
            if not 0.0 < r.factor <= 1.0:
                raise ValueError(f"reversal factor k must lie in (0, 1], got {r.factor}")
            if not prev < r.time < self.t_end:
                raise ValueError(
                    "reversal times must be strictly increasing, positive and < t_end"
                )
            prev = r.time
        if revs and self.mode is Mode.LAB_FULL:
            raise ValueError(
                "time reversal is only defined for the rotating-secular mode; "
                "flipping the Larmor term is not a magic-echo transformation"
            )

    def time_factor(self, t: float) -> float:
        """Multiplier applied to the RHS at time ``t``."""
        factor = 1.0
        for r in self.reversals:
            if r.time <= t:
                factor = -r.factor
        return factor


@dataclass
class Trajectory:
    """Sampled run output.

    ``mean_moment`` is (M, 3): the average of ``e_l`` over spins at each time.
    ``snapshots`` (if requested) is (S, N, 3) at ``snapshot_times``.
    """

    times: NDArray[np.float64]
    mean_moment: NDArray[np.float64]
    energy: NDArray[np.float64]
    total_ez: NDArray[np.float64]
    max_norm_drift: NDArray[np.float64]
    final_moments: NDArray[np.float64]
    p_d: float = 0.01
    mode: Mode = Mode.ROTATING_SECULAR
    gamma_sign: int = 1
    snapshot_times: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    snapshots: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0, 3)))

    def __post_init__(self) -> None:
        n = len(self.times)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name in ("mean_moment", "energy", "total_ez", "max_norm_drift"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match times")

    @property
    def ex(self) -> NDArray[np.float64]:
        return self.mean_moment[:, 0]

    @property
    def transverse(self) -> NDArray[np.float64]:
        """Magnitude of the mean transverse moment (frame independent)."""
        return np.hypot(self.mean_moment[:, 0], self.mean_moment[:, 1])


def _as_moments(moments: ArrayLike, n: int) -> NDArray[np.float64]:
    e = np.asarray(moments, dtype=float)
    if e.shape != (n, 3):
        raise ValueError(f"moments must have shape ({n}, 3), got {e.shape}")
    return e


def _check_index(l: int, n: int) -> int:
    if not -n <= l < n:
        raise IndexError(f"spin index {l} out of range for {n} spins")
    return l % n


def dipole_field_full(table: CouplingTable, moments: ArrayLike, l: int) -> NDArray[np.float64]:
    """Full dipole (+ exchange) field at spin ``l``: ``-sum_k (D_lk + J_lk) e_k``."""
    e = _as_moments(moments, table.n_spins)
    l = _check_index(l, table.n_spins)
    field_l = -np.einsum("kab,kb->a", table.dd[l], e)
    if table.exchange_j is not None:
        field_l -= table.exchange_j[l] @ e
    return field_l


def dipole_field_secular(table: CouplingTable, moments: ArrayLike, l: int) -> NDArray[np.float64]:
    """Secular field at spin ``l`` (exchange is isotropic and kept whole)."""
    e = _as_moments(moments, table.n_spins)
    l = _check_index(l, table.n_spins)
    field_l = SECULAR_WEIGHTS * (table.secular_a[l] @ e)
    if table.exchange_j is not None:
        field_l -= table.exchange_j[l] @ e
    return field_l


class _FieldOperator:
    """Fast all-spin field evaluation on the (3, N) component-major layout."""

    def __init__(self, table: CouplingTable, mode: Mode):
        n = table.n_spins
        self.mode = mode
        key = ("field", mode)
        cached = table._cache.get(key)
        if cached is None:
            if mode is Mode.LAB_FULL:
                # rows (alpha, l), columns (beta, k)
                mat = -table.dd.transpose(2, 0, 3, 1).reshape(3 * n, 3 * n)
                if table.exchange_j is not None:
                    for a in range(3):
                        mat[a * n:(a + 1) * n, a * n:(a + 1) * n] -= table.exchange_j
            else:
                # a_lk is symmetric, so e^T @ a gives per-spin sums along rows
                mat = np.ascontiguousarray(table.secular_a)
            cached = np.ascontiguousarray(mat)
            table._cache[key] = cached
        self.mat = cached
        self.exchange = table.exchange_j
        self.n = n

    def __call__(self, eT: np.ndarray) -> np.ndarray:
        if self.mode is Mode.LAB_FULL:
            return (self.mat @ eT.reshape(-1)).reshape(3, self.n)
        out = (eT @ self.mat) * SECULAR_WEIGHTS[:, None]
        if self.exchange is not None:
            out -= eT @ self.exchange
        return out


def _cross_T(e: np.ndarray, H: np.ndarray) -> np.ndarray:
    out = np.empty_like(e)
    np.multiply(e[1], H[2], out=out[0])
    out[0] -= e[2] * H[1]
    np.multiply(e[2], H[0], out=out[1])
    out[1] -= e[0] * H[2]
    np.multiply(e[0], H[1], out=out[2])
    out[2] -= e[1] * H[0]
    return out


class _Model:
    def __init__(self, plan: SimPlan, table: CouplingTable, gamma_sign: int = 1):
        self.plan = plan
        self.op = _FieldOperator(table, plan.mode)
        self.gamma_sign = gamma_sign
        if plan.mode is Mode.LAB_FULL:
            hx, hy = plan.h
            self.static = np.array([hx, hy, 1.0])[:, None] / plan.p_d
        else:
            self.static = None

    def total_field(self, eT: np.ndarray) -> np.ndarray:
        H = self.op(eT)
        if self.static is not None:
            H = H + self.static
        return H

    def rhs(self, t: float, eT: np.ndarray, factor: float = 1.0) -> np.ndarray:
        return (factor * self.gamma_sign) * _cross_T(eT, self.total_field(eT))

    def energy(self, eT: np.ndarray) -> float:
        dip = self.op(eT)
        # the field is -dE_pair/de, and E_pair is quadratic: E_pair = -1/2 e.H
        e_pair = -0.5 * float(np.sum(eT * dip))
        if self.static is not None:
            e_pair -= float(np.sum(eT * self.static))
        return e_pair


def rhs(
    plan: SimPlan,
    table: CouplingTable,
    moments: ArrayLike,
    t: float,
    gamma_sign: int = 1,
) -> NDArray[np.float64]:
    """``de_l/dt~`` for every spin, shape (N, 3)."""
    e = _as_moments(moments, table.n_spins)
    model = _Model(plan, table, gamma_sign)
    return model.rhs(t, np.ascontiguousarray(e.T), plan.time_factor(t)).T.copy()


def total_energy(plan: SimPlan, table: CouplingTable, moments: ArrayLike) -> float:
    """Dimensionless energy of the configuration.

    Lab frame: Zeeman ``-sum e.(z + h)/p_d`` plus the pair energy
    ``1/2 sum D e e`` (and exchange). Rotating-secular: the secular pair energy.
    """
    e = _as_moments(moments, table.n_spins)
    return _Model(plan, table).energy(np.ascontiguousarray(e.T))


def _sample_grid(plan: SimPlan) -> list[float]:
    """Output times: a uniform grid split exactly at each reversal."""
    step = plan.dt * plan.sample_every
    cuts = [0.0] + [r.time for r in plan.reversals] + [plan.t_end]
    times = [0.0]
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(np.ceil((b - a) / step - 1e-9)))
        times.extend(a + (b - a) * np.arange(1, n + 1) / n)
    return times


def integrate(plan: SimPlan, table: CouplingTable, system: SpinSystem) -> Trajectory:
    """Advance ``system.moments`` over ``[0, plan.t_end]``.

    Moments are never renormalised. If any ``| |e_l| - 1 |`` exceeds
    ``plan.norm_threshold`` the run aborts with :class:`NormDriftError`.
    """
    if system.n_spins != table.n_spins:
        raise ValueError(
            f"system has {system.n_spins} spins but the coupling table has {table.n_spins}"
        )
    model = _Model(plan, table, system.gamma_sign)
    tab = TABLEAUS[plan.integrator]
    grid = _sample_grid(plan)
    eT = np.ascontiguousarray(system.moments.T)

    n_out = len(grid)
    mean = np.empty((n_out, 3))
    energy = np.empty(n_out)
    total_ez = np.empty(n_out)
    drift = np.empty(n_out)
    snap_t, snaps = [], []

    def record(i: int, y: np.ndarray) -> None:
        mean[i] = y.mean(axis=1)
        energy[i] = model.energy(y)
        total_ez[i] = y[2].sum()
        drift[i] = float(np.max(np.abs(np.sqrt(np.einsum("an,an->n", y, y)) - 1.0)))
        if plan.snapshot_every and i % plan.snapshot_every == 0:
            snap_t.append(grid[i])
            snaps.append(y.T.copy())

    record(0, eT)
    h = plan.dt
    for i in range(1, n_out):
        t0, t1 = grid[i - 1], grid[i]
        factor = plan.time_factor(t0)

        def f(t, y, _factor=factor):
            return model.rhs(t, y, _factor)

        eT, h = advance(tab, f, t0, eT, t1, h if plan.rtol else plan.dt, plan.rtol, plan.atol)
        record(i, eT)
        if drift[i] > plan.norm_threshold:
            raise NormDriftError(
                f"max | |e_l| - 1 | = {drift[i]:.3g} at t~ = {t1:.6g} exceeds "
                f"{plan.norm_threshold:g}; reduce dt (currently {plan.dt:g}) "
                "or tighten the integrator tolerance"
            )

    log.debug("integrated %d spins to t=%g, final drift %.3g", table.n_spins, plan.t_end, drift[-1])
    return Trajectory(
        times=np.asarray(grid),
        mean_moment=mean,
        energy=energy,
        total_ez=total_ez,
        max_norm_drift=drift,
        final_moments=eT.T.copy(),
        p_d=plan.p_d,
        mode=plan.mode,
        gamma_sign=system.gamma_sign,
        snapshot_times=np.asarray(snap_t),
        snapshots=np.asarray(snaps) if snaps else np.zeros((0, table.n_spins, 3)),
    )
