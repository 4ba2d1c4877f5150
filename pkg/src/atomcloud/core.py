"""Unit conventions, the two-level atom polarizability, spherical Bessel
kernels and the free-space dyadic Green's tensor.

Natural units throughout: eps0 = c = Z0 = 1, Gamma0 = 1 and the atomic
wavelength lambda_a = 1, so the (fixed) wavenumber is k = 2*pi. Detunings are
in units of Gamma0, lengths in units of lambda_a, and field amplitudes are
E0 = H0 = 1 unless stated otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

EPS0 = 1.0
C_LIGHT = 1.0
Z0 = 1.0
WAVELENGTH = 1.0
K_ATOM = 2.0 * np.pi / WAVELENGTH


class SingularSeparationError(ValueError):
    """Two dipoles share a position; the Green's tensor is undefined."""


def alpha0(k: float = K_ATOM) -> float:
    """Radiation-limited dipole polarizability scale 6*pi/k**3."""
    return 6.0 * np.pi / k**3


def alpha0_quad(k: float = K_ATOM) -> float:
    """Radiation-limited quadrupole polarizability scale 120*pi/k**5."""
    return 120.0 * np.pi / k**5


def cross_section_unit(k: float = K_ATOM) -> float:
    """lambda**2 / (2*pi), the unit every reported cross section uses."""
    lam = 2.0 * np.pi / k
    return lam**2 / (2.0 * np.pi)


@dataclass(frozen=True)
class AtomModel:
    """Isotropic two-level atom in the weak-excitation limit.

    Parameters
    ----------
    gamma0 : float
        Radiative linewidth (defines the detuning unit).
    gamma_nr : float
        Non-radiative linewidth. Zero for an elastic scatterer.
    detuning : float
        omega - omega_a in units of gamma0.
    """

    gamma0: float = 1.0
    gamma_nr: float = 0.0
    detuning: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not self.gamma_nr >= 0:
            raise ValueError(f"gamma_nr must be non-negative, got {self.gamma_nr}")

    def with_detuning(self, detuning: float) -> "AtomModel":
        return AtomModel(self.gamma0, self.gamma_nr, float(detuning))


@dataclass(frozen=True)
class CloudSpec:
    """Spherical cloud of ``n_atoms`` atoms of radius ``radius`` (in lambda_a)."""

    n_atoms: int = 25
    radius: float = 0.2
    min_pair_distance: float = 1e-3

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not 0 <= self.min_pair_distance < 2 * self.radius:
            raise ValueError(
                "min_pair_distance must lie in [0, 2*radius), "
                f"got {self.min_pair_distance} for radius {self.radius}"
            )

    def density(self, k: float = K_ATOM) -> float:
        """Dimensionless density rho/k**3."""
        volume = 4.0 / 3.0 * np.pi * self.radius**3
        return self.n_atoms / volume / k**3


def atomic_polarizability(model: AtomModel, k: float = K_ATOM) -> complex:
    """Polarizability alpha(omega) of a single atom (with eps0 factored out).

    ``p = eps0 * alpha * E``. On resonance and without non-radiative decay
    ``alpha = 1j * alpha0(k)``.
    """
    if not k > 0:
        raise ValueError(f"wavenumber must be positive, got {k}")
    a0 = alpha0(k)
    denom = model.detuning * model.gamma0 + 0.5j * (model.gamma0 + model.gamma_nr)
    return -(a0 * model.gamma0 / 2.0) / denom


def polarizability_array(detunings, gamma0: float = 1.0, gamma_nr: float = 0.0,
                         k: float = K_ATOM) -> np.ndarray:
    """Vectorized :func:`atomic_polarizability` over a detuning grid."""
    d = np.asarray(detunings, dtype=float)
    return -(alpha0(k) * gamma0 / 2.0) / (d * gamma0 + 0.5j * (gamma0 + gamma_nr))


# Below the switch point each kernel uses its Taylor series; above it the
# trigonometric closed form. The closed forms lose ~x**(-2n) relative digits
# to cancellation, so higher orders switch later.
BESSEL_SWITCH = (0.1, 0.1, 0.5, 1.0)
_SERIES_TERMS = 14


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


_SERIES_COEFFS = [
    np.array([(-1) ** m / (2**m * factorial(m) * _double_factorial(2 * n + 2 * m + 1))
              for m in range(_SERIES_TERMS)])
    for n in range(4)
]


def _kernel_series(n: int, x: np.ndarray) -> np.ndarray:
    x2 = x * x
    out = np.zeros_like(x)
    for c in _SERIES_COEFFS[n][::-1]:
        out = out * x2 + c
    return out


def _kernel_closed(n: int, x: np.ndarray) -> np.ndarray:
    s, c = np.sin(x), np.cos(x)
    if n == 0:
        return s / x
    x2 = x * x
    if n == 1:
        return (s - x * c) / (x2 * x)
    if n == 2:
        return ((3.0 - x2) * s - 3.0 * x * c) / (x2 * x2 * x)
    return ((15.0 - 6.0 * x2) * s - (15.0 - x2) * x * c) / (x2 * x2 * x2 * x)


def spherical_bessel_kernel(n: int, x):
    """Return j_n(x) / x**n for n in {0, 1, 2, 3}.

    The ratio is regular at the origin with limits 1, 1/3, 1/15 and 1/105.
    Accepts scalars or arrays; negative arguments are rejected.
    """
    if n not in (0, 1, 2, 3):
        raise ValueError(f"kernel order must be 0..3, got {n}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("spherical_bessel_kernel requires x >= 0")
    small = xa < BESSEL_SWITCH[n]
    out = np.empty_like(xa)
    out[small] = _kernel_series(n, xa[small])
    big = ~small
    out[big] = _kernel_closed(n, xa[big])
    if np.ndim(x) == 0:
        return float(out)
    return out


def greens_tensor(r_i, r_j, k: float = K_ATOM) -> np.ndarray:
    """Free-space dyadic Green's tensor G(r_i, r_j) as a complex 3x3 array.

    ``G @ p`` is the field at ``r_i`` radiated by a dipole ``p`` at ``r_j``
    (eps0 = 1). Raises :class:`SingularSeparationError` for coincident points.
    """
    sep = np.asarray(r_i, dtype=float) - np.asarray(r_j, dtype=float)
    dist = np.linalg.norm(sep)
    if dist == 0.0:
        raise SingularSeparationError("coincident points in greens_tensor")
    zeta = k * dist
    n = sep / dist
    g1 = 1.0 / zeta - 1.0 / zeta**3 + 1j / zeta**2
    g2 = -1.0 / zeta + 3.0 / zeta**3 - 3j / zeta**2
    pref = 3.0 / (2.0 * alpha0(k) * EPS0) * np.exp(1j * zeta)
    return pref * (g1 * np.eye(3) + g2 * np.outer(n, n))


def coupling_matrix(positions, k: float = K_ATOM) -> np.ndarray:
    """Dense 3N x 3N matrix of Green's tensor blocks with zero diagonal blocks.

    Vectorized counterpart of :func:`greens_tensor`; block (i, j) equals
    ``greens_tensor(positions[i], positions[j], k)``.
    """
    pos = np.asarray(positions, dtype=float)
    n_at = len(pos)
    sep = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(sep, axis=-1)
    off = ~np.eye(n_at, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise SingularSeparationError("coincident atoms in realization")
    dist_safe = np.where(off, dist, 1.0)
    zeta = k * dist_safe
    unit = sep / dist_safe[..., None]
    g1 = 1.0 / zeta - 1.0 / zeta**3 + 1j / zeta**2
    g2 = -1.0 / zeta + 3.0 / zeta**3 - 3j / zeta**2
    pref = 3.0 / (2.0 * alpha0(k) * EPS0) * np.exp(1j * zeta)
    blocks = pref[..., None, None] * (
        g1[..., None, None] * np.eye(3) + g2[..., None, None] * unit[..., :, None] * unit[..., None, :]
    )
    blocks[~off] = 0.0
    return blocks.transpose(0, 2, 1, 3).reshape(3 * n_at, 3 * n_at)


def radiative_coupling_matrix(positions, k: float = K_ATOM) -> np.ndarray:
    """Real 3N x 3N matrix of Im G(r_i, r_j), including the regular self term.

    Im G = k**3/(4 pi) [(j0 - j1/zeta) I + j2 n n], which tends to
    k**3/(6 pi) I as the separation vanishes. Evaluated through the Bessel
    kernels so it stays accurate for close pairs.
    """
    pos = np.asarray(positions, dtype=float)
    n_at = len(pos)
    sep = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(sep, axis=-1)
    zeta = k * dist
    k0 = spherical_bessel_kernel(0, zeta)
    k1 = spherical_bessel_kernel(1, zeta)
    k2 = spherical_bessel_kernel(2, zeta)
    # j2(zeta) n n = kernel2 * k**2 * sep sep
    blocks = k**3 / (4.0 * np.pi) * (
        (k0 - k1)[..., None, None] * np.eye(3)
        + (k2 * k**2)[..., None, None] * sep[..., :, None] * sep[..., None, :]
    )
    return blocks.transpose(0, 2, 1, 3).reshape(3 * n_at, 3 * n_at) / EPS0
