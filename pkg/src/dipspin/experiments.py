"""Scenario builders: FID, magic echo, Pake lines and the N-scaling study."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .dynamics import Mode, Reversal, SimPlan, Trajectory, integrate
from .geometry import (
    SpinSystem,
    build_couplings,
    build_cubic_lattice,
    build_line,
    line_direction,
)
from .integrators import Integrator


PLACEMENTS = ("scattered", "lowest")


@dataclass(frozen=True)
class InitialState:
    """Partially polarised start: a fraction of spins exactly along ``axis``.

    ``round(polarization * N)`` spins point along ``axis``; the rest are drawn
    uniformly on the sphere. ``placement`` picks which spins are aligned:
    ``"scattered"`` takes a seeded random subset, ``"lowest"`` the lowest
    indices. A contiguous aligned block is itself nearly stationary under the
    secular coupling (a fully aligned state does not evolve), so ``lowest``
    slows the decay of long lines and slabs considerably.
    """

    polarization: float = 0.7
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    seed: int = 0
    placement: str = "scattered"

    def __post_init__(self) -> None:
        if not 0.0 <= self.polarization <= 1.0:
            raise ValueError(f"polarization must lie in [0, 1], got {self.polarization}")
        ax = np.asarray(self.axis, dtype=float)
        if ax.shape != (3,) or abs(np.linalg.norm(ax) - 1.0) > 1e-12:
            raise ValueError(f"axis must be a unit 3-vector, got {self.axis}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")


def random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def prepare_initial(system: SpinSystem, init: InitialState) -> SpinSystem:
    n = system.n_spins
    n_aligned = int(round(init.polarization * n))
    rng = np.random.default_rng(init.seed)
    if init.placement == "scattered":
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    e = np.empty((n, 3))
    e[order[:n_aligned]] = np.asarray(init.axis, dtype=float)
    e[order[n_aligned:]] = random_unit_vectors(n - n_aligned, rng)
    return system.with_moments(e)


def _plan(mode, p_d, t_end, dt, integrator, **kw) -> SimPlan:
    return SimPlan(mode=mode, p_d=p_d, t_end=t_end, dt=dt, integrator=Integrator(integrator), **kw)


def run_fid(
    dims: Sequence[int] = (10, 10, 10),
    periodic: bool = True,
    p_d: float = 0.01,
    init: InitialState = InitialState(0.7),
    t_end: float = 6.0,
    mode: Mode | str = Mode.ROTATING_SECULAR,
    dt: Optional[float] = None,
    integrator: Integrator | str = Integrator.RK4,
    **plan_kw,
) -> Trajectory:
    """Free induction decay of a cubic sample."""
    system = prepare_initial(build_cubic_lattice(*dims, periodic=periodic), init)
    plan = _plan(mode, p_d, t_end, dt, integrator, **plan_kw)
    return integrate(plan, build_couplings(system), system)


def run_echo(
    dims: Sequence[int] = (10, 10, 10),
    p_d: float = 0.01,
    init: InitialState = InitialState(0.98),
    tau: float = 5.0,
    k: float = 1.0,
    t_end: Optional[float] = None,
    periodic: bool = True,
    dt: Optional[float] = None,
    integrator: Integrator | str = Integrator.RK4,
    **plan_kw,
) -> Trajectory:
    """FID up to ``tau``, then secular evolution reversed at rate ``k``.

    The echo peak is expected at ``tau + tau / k``; the default ``t_end``
    leaves another ``tau`` after it so the whole echo is recorded.
    """
    if t_end is None:
        t_end = tau + tau / k + tau
    system = prepare_initial(build_cubic_lattice(*dims, periodic=periodic), init)
    plan = _plan(
        Mode.ROTATING_SECULAR, p_d, t_end, dt, integrator,
        reversals=(Reversal(tau, k),), **plan_kw,
    )
    return integrate(plan, build_couplings(system), system)


def run_pake(
    n_spins: int = 2,
    theta: float = 0.0,
    p_d: float = 0.01,
    mode: Mode | str = Mode.LAB_FULL,
    init: InitialState = InitialState(0.7),
    t_end: float = 60.0,
    dt: Optional[float] = None,
    integrator: Integrator | str = Integrator.RK4,
    **plan_kw,
) -> Trajectory:
    """A line of spins at angle ``theta`` to the field, for spectral analysis.

    Lab-frame full-tensor dynamics by default, so non-secular lines near
    0 and 2 Larmor frequencies can appear.
    """
    system = prepare_initial(build_line(n_spins, line_direction(theta)), init)
    plan = _plan(mode, p_d, t_end, dt, integrator, **plan_kw)
    return integrate(plan, build_couplings(system), system)


def run_scaling(
    counts: Iterable[int] = (2, 25, 50, 100, 200, 500, 1000),
    direction: ArrayLike = (0.0, 0.0, 1.0),
    p_d: float = 0.01,
    init: InitialState = InitialState(0.7),
    t_end: float = 10.0,
    mode: Mode | str = Mode.ROTATING_SECULAR,
    dt: Optional[float] = None,
    integrator: Integrator | str = Integrator.RK4,
    workers: int = 1,
    **plan_kw,
) -> list[Trajectory]:
    """One FID per spin count on a line, all other parameters identical.

    A z-directed line has no non-secular couplings, so the rotating-secular
    default loses nothing relative to the lab frame.
    """
    counts = list(counts)
    if any(n < 2 for n in counts):
        raise ValueError("every spin count must be >= 2")
    plan = _plan(mode, p_d, t_end, dt, integrator, **plan_kw)

    def one(n: int) -> Trajectory:
        system = prepare_initial(build_line(n, direction), init)
        return integrate(plan, build_couplings(system), system)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, counts))
    return [one(n) for n in counts]
