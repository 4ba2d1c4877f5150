"""Incident fields: a single plane wave and the TE/TM four-plane-wave
configurations, with analytic E, H and symmetrized gradients.

Every variant is stored as a list of plane-wave beams ``A exp(i(k.r + phase))``
with H = khat x E (Z0 = 1), so the field and its derivatives are exact
superpositions. Time dependence is exp(-i omega t).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import K_ATOM, Z0


class Variant(str, Enum):
    SINGLE_PLANE_WAVE = "pw"
    FOUR_WAVE_TE = "te4"
    FOUR_WAVE_TM = "tm4"


@dataclass(frozen=True, eq=False)
class Beam:
    direction: np.ndarray  # unit propagation vector
    e_amp: np.ndarray      # complex electric amplitude (transverse)
    phase: float = 0.0


@dataclass(frozen=True, eq=False)
class ExcitationField:
    """Incident field specification.

    Use :func:`single_plane_wave`, :func:`four_wave_te` or :func:`four_wave_tm`
    rather than building one by hand.
    """

    variant: Variant
    beams: tuple
    amplitude: float = 1.0
    phi: float = 0.0
    psi: float = np.pi / 4
    k: float = K_ATOM
    label: str = field(default="", compare=False)

    @property
    def h_amplitude(self) -> float:
        return self.amplitude / Z0

    def eval_E(self, r) -> np.ndarray:
        return _eval(self, r, magnetic=False)

    def eval_H(self, r) -> np.ndarray:
        return _eval(self, r, magnetic=True)

    def eval_sym_gradients(self, r):
        """Return (grad E + E grad, grad H + H grad) at ``r``.

        Entry [mu, nu] is d_mu F_nu + d_nu F_mu. For an array of points of
        shape (..., 3) the result has shape (..., 3, 3).
        """
        return _sym_grad(self, r, magnetic=False), _sym_grad(self, r, magnetic=True)


def _beam_vectors(beam: Beam, magnetic: bool) -> np.ndarray:
    if magnetic:
        return np.cross(beam.direction, beam.e_amp) / Z0
    return beam.e_amp


def _phases(fld: ExcitationField, beam: Beam, r: np.ndarray) -> np.ndarray:
    return np.exp(1j * (fld.k * (r @ beam.direction) + beam.phase))


def _eval(fld: ExcitationField, r, magnetic: bool) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape, dtype=complex)
    for beam in fld.beams:
        out = out + _phases(fld, beam, r)[..., None] * _beam_vectors(beam, magnetic)
    return out


def _sym_grad(fld: ExcitationField, r, magnetic: bool) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape + (3,), dtype=complex)
    for beam in fld.beams:
        amp = _beam_vectors(beam, magnetic)
        # d_mu F_nu = i k khat_mu F_nu
        grad = 1j * fld.k * np.outer(beam.direction, amp)
        out = out + _phases(fld, beam, r)[..., None, None] * (grad + grad.T)
    return out


def single_plane_wave(amplitude: float = 1.0, k: float = K_ATOM,
                      direction=(0.0, 0.0, 1.0), polarization=(1.0, 0.0, 0.0)) -> ExcitationField:
    """Plane wave E0 exp(i k z) e_x by default.

    ``direction`` and ``polarization`` may be changed to probe other
    orientations (polarizability retrieval assumes the default).
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    pol = np.asarray(polarization, dtype=complex)
    pol = pol / np.linalg.norm(pol)
    if abs(np.dot(d, pol)) > 1e-12:
        raise ValueError("polarization must be transverse to the propagation direction")
    beam = Beam(d, amplitude * pol, 0.0)
    return ExcitationField(Variant.SINGLE_PLANE_WAVE, (beam,), amplitude, 0.0, 0.0, k)


def _four_wave_dirs(psi: float):
    s, c = np.sin(psi), np.cos(psi)
    k1 = np.array([s, 0.0, c])
    k3 = np.array([s, 0.0, -c])
    return k1, -k1, k3, -k3


def four_wave_te(phi: float, psi: float = np.pi / 4, amplitude: float = 1.0,
                 k: float = K_ATOM) -> ExcitationField:
    """Four TE beams, each with E = (E0/4) e_y, phases (phi, -phi, 0, 0)."""
    ey = np.array([0.0, 1.0, 0.0], dtype=complex)
    beams = []
    for d, ph in zip(_four_wave_dirs(psi), (phi, -phi, 0.0, 0.0)):
        beams.append(Beam(d, amplitude / 4.0 * ey, ph))
    return ExcitationField(Variant.FOUR_WAVE_TE, tuple(beams), amplitude, phi, psi, k)


def four_wave_tm(phi: float, psi: float = np.pi / 4, amplitude: float = 1.0,
                 k: float = K_ATOM) -> ExcitationField:
    """Four TM beams, each with H = (H0/4) e_y, phases (phi, -phi, 0, 0).

    ``amplitude`` is E0; H0 = E0 / Z0. The electric amplitude of each beam is
    -Z0 khat x H.
    """
    hy = np.array([0.0, amplitude / Z0 / 4.0, 0.0], dtype=complex)
    beams = []
    for d, ph in zip(_four_wave_dirs(psi), (phi, -phi, 0.0, 0.0)):
        beams.append(Beam(d, -Z0 * np.cross(d, hy), ph))
    return ExcitationField(Variant.FOUR_WAVE_TM, tuple(beams), amplitude, phi, psi, k)


def make_field(variant, phi: float = 0.0, psi: float = np.pi / 4,
               amplitude: float = 1.0, k: float = K_ATOM) -> ExcitationField:
    variant = Variant(variant)
    if variant is Variant.SINGLE_PLANE_WAVE:
        return single_plane_wave(amplitude, k)
    if variant is Variant.FOUR_WAVE_TE:
        return four_wave_te(phi, psi, amplitude, k)
    return four_wave_tm(phi, psi, amplitude, k)
