"""Spin configurations and pairwise coupling tables.

Lengths are measured in lattice constants, so every coupling coefficient is a
pure number. The dipole tensor between spins ``l`` and ``k`` is

    D^{ab} = delta_{ab} / r^3 - 3 r^a r^b / r^5

with ``r`` the (minimum-image) separation. The secular and non-secular
coefficients follow the usual high-field decomposition:

    a = D^{zz}
    b = (D^{xx} - D^{yy} - 2i D^{xy}) / 4
    c = (D^{xz} - i D^{yz}) / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))

UNIT_TOL = 1e-12


class CoincidentSpinsError(ValueError):
    """Two spins sit at the same point (possibly after periodic wrapping)."""


def line_direction(theta: float, phi: float = 0.0) -> NDArray[np.float64]:
    """Unit vector at polar angle ``theta`` from z and azimuth ``phi``."""
    return np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Positions and unit moments of N classical spins.

    Parameters
    ----------
    positions : (N, 3) array
        Spin sites in units of the lattice constant.
    moments : (N, 3) array
        Unit moment vectors ``e_l``.
    cell : tuple of 3 ints, optional
        Periodic box ``(n_x, n_y, n_z)``; ``None`` means open boundaries.
    gamma_sign : {+1, -1}
        Sign of the gyromagnetic ratio. Its magnitude is absorbed into ``p_d``.
    """

    positions: NDArray[np.float64]
    moments: NDArray[np.float64]
    cell: Optional[tuple[int, int, int]] = None
    gamma_sign: int = 1

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        mom = np.array(self.moments, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if mom.shape != pos.shape:
            raise ValueError(
                f"moments shape {mom.shape} does not match positions {pos.shape}"
            )
        if self.gamma_sign not in (1, -1):
            raise ValueError(f"gamma_sign must be +1 or -1, got {self.gamma_sign}")
        norms = np.linalg.norm(mom, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        if bad.size:
            raise ValueError(
                f"moment {bad[0]} has norm {norms[bad[0]]!r}; moments must be unit vectors"
            )
        cell = None
        if self.cell is not None:
            cell = tuple(int(c) for c in self.cell)
            if len(cell) != 3 or min(cell) < 1:
                raise ValueError(f"cell must be three positive counts, got {self.cell}")
            if np.any(pos < 0) or np.any(pos >= np.array(cell)):
                raise ValueError("every position must lie inside the periodic cell")
        pos.setflags(write=False)
        mom.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "moments", mom)
        object.__setattr__(self, "cell", cell)
        if len(pos) > 1:
            dist = np.linalg.norm(self.separations(), axis=-1)
            np.fill_diagonal(dist, np.inf)
            if dist.min() == 0.0:
                l, k = np.unravel_index(np.argmin(dist), dist.shape)
                raise CoincidentSpinsError(f"spins {l} and {k} coincide")

    @property
    def n_spins(self) -> int:
        return len(self.positions)

    def with_moments(self, moments: ArrayLike) -> "SpinSystem":
        return replace(self, moments=np.asarray(moments, dtype=float))

    def separations(self) -> NDArray[np.float64]:
        """(N, N, 3) array of ``r_k - r_l``, minimum image when periodic."""
        r = self.positions[None, :, :] - self.positions[:, None, :]
        if self.cell is not None:
            box = np.array(self.cell, dtype=float)
            r = r - box * np.round(r / box)
        return r


def dipole_tensor(r: ArrayLike) -> NDArray[np.float64]:
    """Dimensionless dipole tensor for separation(s) ``r``.

    Accepts a single 3-vector or any array with trailing dimension 3 and
    returns the matching ``(..., 3, 3)`` stack.
    """
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 3:
        raise ValueError("separation vectors must have a trailing dimension of 3")
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist == 0.0):
        raise CoincidentSpinsError("zero-length separation")
    inv3 = dist**-3
    inv5 = dist**-5
    return (
        np.eye(3) * inv3[..., None, None]
        - 3.0 * r[..., :, None] * r[..., None, :] * inv5[..., None, None]
    )


def build_cubic_lattice(
    n_x: int, n_y: int, n_z: int, periodic: bool = False
) -> SpinSystem:
    """Simple cubic lattice with unit spacing.

    Sites are ordered with x running fastest, ``index = x + n_x*(y + n_y*z)``.
    Moments start along +x; use :func:`dipspin.experiments.prepare_initial`
    to set an initial state.
    """
    for name, n in (("n_x", n_x), ("n_y", n_y), ("n_z", n_z)):
        if int(n) != n or n < 1:
            raise ValueError(f"{name} must be a positive integer, got {n}")
    zz, yy, xx = np.meshgrid(
        np.arange(n_z), np.arange(n_y), np.arange(n_x), indexing="ij"
    )
    pos = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1).astype(float)
    mom = np.zeros_like(pos)
    mom[:, 0] = 1.0
    cell = (int(n_x), int(n_y), int(n_z)) if periodic else None
    return SpinSystem(positions=pos, moments=mom, cell=cell)


def build_line(n: int, direction: ArrayLike = (0.0, 0.0, 1.0)) -> SpinSystem:
    """``n`` spins at ``j * direction`` for j = 0..n-1, open boundaries."""
    if int(n) != n or n < 2:
        raise ValueError(f"a line needs at least 2 spins, got {n}")
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit 3-vector, got {direction}")
    pos = np.arange(int(n))[:, None] * d[None, :]
    mom = np.zeros_like(pos)
    mom[:, 0] = 1.0
    return SpinSystem(positions=pos, moments=mom)


ExchangeGenerator = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def nearest_neighbour_exchange(j: float, cutoff: float = 1.0 + 1e-9) -> ExchangeGenerator:
    """Isotropic exchange ``j`` between spins closer than ``cutoff``."""

    def generator(r: NDArray[np.float64]) -> NDArray[np.float64]:
        dist = np.linalg.norm(r, axis=-1)
        return np.where(dist <= cutoff, float(j), 0.0)

    return generator


@dataclass(frozen=True, eq=False)
class CouplingTable:
    """Precomputed pair couplings; all diagonals are zero.

    ``dd`` has shape (N, N, 3, 3). ``secular_a`` is real (N, N);
    ``nonsecular_b`` and ``nonsecular_c`` are complex (N, N) and only used
    for diagnostics. ``exchange_j`` is ``None`` unless exchange was requested.
    """

    dd: NDArray[np.float64]
    secular_a: NDArray[np.float64]
    nonsecular_b: NDArray[np.complex128]
    nonsecular_c: NDArray[np.complex128]
    exchange_j: Optional[NDArray[np.float64]] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_spins(self) -> int:
        return self.dd.shape[0]

    @classmethod
    def from_tensors(
        cls, dd: ArrayLike, exchange_j: Optional[ArrayLike] = None
    ) -> "CouplingTable":
        dd = np.array(dd, dtype=float)
        n = dd.shape[0]
        if dd.shape != (n, n, 3, 3):
            raise ValueError(f"dd must have shape (N, N, 3, 3), got {dd.shape}")
        idx = np.arange(n)
        dd[idx, idx] = 0.0
        a = dd[..., 2, 2].copy()
        b = 0.25 * (dd[..., 0, 0] - dd[..., 1, 1] - 2j * dd[..., 0, 1])
        c = 0.5 * (dd[..., 0, 2] - 1j * dd[..., 1, 2])
        j = None
        if exchange_j is not None:
            j = np.array(exchange_j, dtype=float)
            if j.shape != (n, n):
                raise ValueError(f"exchange_j must have shape {(n, n)}, got {j.shape}")
            j[idx, idx] = 0.0
        for arr in (dd, a, b, c) + ((j,) if j is not None else ()):
            arr.setflags(write=False)
        return cls(dd=dd, secular_a=a, nonsecular_b=b, nonsecular_c=c, exchange_j=j)

    @classmethod
    def disjoint(cls, tables: Sequence["CouplingTable"]) -> "CouplingTable":
        """Block-diagonal union of independent systems (no cross couplings)."""
        sizes = [t.n_spins for t in tables]
        n = sum(sizes)
        dd = np.zeros((n, n, 3, 3))
        use_j = any(t.exchange_j is not None for t in tables)
        jj = np.zeros((n, n)) if use_j else None
        start = 0
        for t, size in zip(tables, sizes):
            sl = slice(start, start + size)
            dd[sl, sl] = t.dd
            if use_j and t.exchange_j is not None:
                jj[sl, sl] = t.exchange_j
            start += size
        return cls.from_tensors(dd, jj)


def build_couplings(
    system: SpinSystem, exchange: Optional[ExchangeGenerator] = None
) -> CouplingTable:
    """Dipole (and optional exchange) couplings for every pair of ``system``.

    ``exchange`` maps an array of separation vectors ``(..., 3)`` to the
    dimensionless exchange constants for those pairs.
    """
    n = system.n_spins
    r = system.separations()
    off = ~np.eye(n, dtype=bool)
    dd = np.zeros((n, n, 3, 3))
    if n > 1:
        dd[off] = dipole_tensor(r[off])
    j = None
    if exchange is not None:
        j = np.zeros((n, n))
        if n > 1:
            j[off] = np.asarray(exchange(r[off]), dtype=float)
    return CouplingTable.from_tensors(dd, j)
