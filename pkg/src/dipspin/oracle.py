"""Exact two-spin-1/2 reference: Zeeman plus dipolar Hamiltonian.

Units are hbar = omega_0 = 1. The product basis is ordered
``|uu>, |ud>, |du>, |dd>`` so the Zeeman part is ``-diag(1, 0, 0, -1)``.
The interspin axis lies in the xz-plane (azimuth 0), which keeps the
matrix real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import MAGIC_ANGLE

ZEEMAN = -np.diag([1.0, 0.0, 0.0, -1.0])

# dipolar blocks weighted by (1 - 3cos^2), sin*cos and sin^2
_SECULAR_BLOCK = np.array(
    [[1, 0, 0, 0], [0, -1, -1, 0], [0, -1, -1, 0], [0, 0, 0, 1]], dtype=float
)
_TILT_BLOCK = np.array(
    [[0, 1, 1, 0], [1, 0, 0, -1], [1, 0, 0, -1], [0, -1, -1, 0]], dtype=float
)
_DOUBLE_QUANTUM_BLOCK = np.array(
    [[0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]], dtype=float
)

TOTAL_SZ = np.diag([1.0, 0.0, 0.0, -1.0])


@dataclass(frozen=True)
class TwoSpinHamiltonian:
    theta: float
    omega_d: float
    matrix: NDArray[np.float64]

    @property
    def dipolar(self) -> NDArray[np.float64]:
        return self.matrix - ZEEMAN


def dipolar_matrix(theta: float, omega_d: float) -> NDArray[np.float64]:
    c, s = np.cos(theta), np.sin(theta)
    return 0.5 * omega_d * (
        _SECULAR_BLOCK * (1 - 3 * c * c)
        - 3 * _TILT_BLOCK * s * c
        - 3 * _DOUBLE_QUANTUM_BLOCK * s * s
    )


def build_hamiltonian(theta: float, omega_d: float) -> TwoSpinHamiltonian:
    if not omega_d > 0:
        raise ValueError(f"omega_d must be positive, got {omega_d}")
    return TwoSpinHamiltonian(theta, omega_d, ZEEMAN + dipolar_matrix(theta, omega_d))


def eigenvalues(h: TwoSpinHamiltonian) -> NDArray[np.float64]:
    return np.linalg.eigvalsh(h.matrix)


def transition_frequencies(h: TwoSpinHamiltonian) -> list[tuple[float, int, int]]:
    """Level gaps between states whose total-S_z character differs by one.

    Returns ``(frequency, upper, lower)`` with eigenstate indices in
    ascending-energy order.
    """
    vals, vecs = np.linalg.eigh(h.matrix)
    m = np.rint(np.einsum("ia,ij,ja->a", vecs, TOTAL_SZ, vecs)).astype(int)
    out = []
    for i in range(4):
        for j in range(i):
            if abs(m[i] - m[j]) == 1:
                out.append((float(vals[i] - vals[j]), i, j))
    return sorted(out)


def predicted_splitting(theta: float, omega_d: float) -> float:
    """Doublet separation about the Larmor line.

    Takes the single-quantum transitions closest to 1 from above and from
    below and returns their difference.
    """
    freqs = np.array([f for f, _, _ in transition_frequencies(build_hamiltonian(theta, omega_d))])
    above = freqs[freqs >= 1.0]
    below = freqs[freqs < 1.0]
    if above.size and below.size:
        return float(above.min() - below.max())
    nearest = freqs[np.argsort(np.abs(freqs - 1.0))[:2]]
    return float(abs(nearest[0] - nearest[1]))


# Simplified forms for the two symmetric orientations, as usually quoted.

def reference_matrix(theta: float, omega_d: float) -> NDArray[np.float64]:
    """Quoted matrix for ``theta`` = 0 or pi/2.

    Both quoted forms carry the Zeeman diagonal with the opposite sign to
    :func:`build_hamiltonian` (the |uu> and |dd> energies are swapped), which
    leaves the level set unchanged. :func:`compare_with_reference` reports
    the matrix difference instead of hiding it.
    """
    w = omega_d
    if np.isclose(theta, 0.0):
        return -w * np.array(
            [
                [-1 / w + 1, 0, 0, 0],
                [0, -1, -1, 0],
                [0, -1, -1, 0],
                [0, 0, 0, 1 / w + 1],
            ]
        )
    if np.isclose(theta, np.pi / 2):
        return 0.5 * w * np.array(
            [
                [1 + 2 / w, 0, 0, -3],
                [0, -1, -1, 0],
                [0, -1, -1, 0],
                [-3, 0, 0, 1 - 2 / w],
            ]
        )
    raise ValueError("quoted matrices exist only for theta = 0 and pi/2")


def reference_eigenvalues(theta: float, omega_d: float) -> NDArray[np.float64]:
    """Closed-form level sets for ``theta`` = 0 or pi/2, sorted."""
    w = omega_d
    if np.isclose(theta, 0.0):
        vals = [0.0, 1 - w, 2 * w, -(1 + w)]
    elif np.isclose(theta, np.pi / 2):
        root = np.sqrt(9 * w * w + 4)
        vals = [0.0, -w, (w - root) / 2, (w + root) / 2]
    elif np.isclose(theta, MAGIC_ANGLE):
        vals = [-1.0, 0.0, 0.0, 1.0]  # valid up to O(omega_d^2)
    else:
        raise ValueError("closed forms exist only for theta = 0, pi/2 and the magic angle")
    return np.sort(vals)


def weak_coupling_eigenvalues(omega_d: float) -> NDArray[np.float64]:
    """First-order expansion of the pi/2 levels for ``omega_d << 1``."""
    w = omega_d
    return np.sort([0.0, -w, w / 2 - 1, w / 2 + 1])


def compare_with_reference(theta: float, omega_d: float) -> dict:
    """Differences between direct diagonalisation and the quoted forms."""
    h = build_hamiltonian(theta, omega_d)
    ref = reference_matrix(theta, omega_d)
    return {
        "theta": theta,
        "omega_d": omega_d,
        "matrix_max_abs_diff": float(np.max(np.abs(h.matrix - ref))),
        "quoted_matrix_eig_diff": float(
            np.max(np.abs(np.linalg.eigvalsh(ref) - reference_eigenvalues(theta, omega_d)))
        ),
        "eigenvalue_max_abs_diff": float(
            np.max(np.abs(eigenvalues(h) - reference_eigenvalues(theta, omega_d)))
        ),
    }
