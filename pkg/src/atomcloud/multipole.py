"""Exact Cartesian multipole moments of a set of point dipoles, cross
sections built from moments or from retrieved polarizabilities, and the
independent exact extinction / scattering / far-field oracles.

Moments are stored as (dE, dM/c, QE, QM/c). Flattened, a moment vector has 24
complex entries: dE[0:3], dM[3:6], QE[6:15], QM[15:24] (row-major tensors).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import K_ATOM, spherical_bessel_kernel
from .excitation import ExcitationField, Variant

MULTIPOLES = ("ED", "MD", "EQ", "MQ")
N_MOMENT = 24
SLICES = {"ED": slice(0, 3), "MD": slice(3, 6), "EQ": slice(6, 15), "MQ": slice(15, 24)}


@dataclass(frozen=True, eq=False)
class MultipoleMoments:
    """Electric/magnetic dipole and quadrupole moments (any leading batch shape)."""

    dE: np.ndarray
    dM: np.ndarray
    QE: np.ndarray
    QM: np.ndarray

    def as_vector(self) -> np.ndarray:
        lead = np.shape(self.dE)[:-1]
        return np.concatenate([
            np.reshape(self.dE, lead + (3,)), np.reshape(self.dM, lead + (3,)),
            np.reshape(self.QE, lead + (9,)), np.reshape(self.QM, lead + (9,)),
        ], axis=-1)

    @classmethod
    def from_vector(cls, v) -> "MultipoleMoments":
        v = np.asarray(v)
        lead = v.shape[:-1]
        return cls(v[..., 0:3], v[..., 3:6],
                   v[..., 6:15].reshape(lead + (3, 3)), v[..., 15:24].reshape(lead + (3, 3)))


def _cross_matrix(r: np.ndarray) -> np.ndarray:
    """Matrices X with X @ p = r x p, for positions of shape (N, 3)."""
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    zero = np.zeros_like(x)
    return np.stack([
        np.stack([zero, -z, y], -1),
        np.stack([z, zero, -x], -1),
        np.stack([-y, x, zero], -1),
    ], -2)


def moment_operator(positions, k: float = K_ATOM) -> np.ndarray:
    """Linear map W (24, 3N) taking stacked dipoles to the moment vector.

    Implements the exact multipole integrals for the point current
    J = -i omega sum_i p_i delta(r - r_i) about the origin.
    """
    r = np.asarray(positions, dtype=float)
    n_at = len(r)
    rr = np.einsum("ia,ia->i", r, r)
    kr = k * np.sqrt(rr)
    j0 = spherical_bessel_kernel(0, kr)
    k1 = spherical_bessel_kernel(1, kr)
    k2 = spherical_bessel_kernel(2, kr)
    k3 = spherical_bessel_kernel(3, kr)
    eye = np.eye(3)
    rr_out = np.einsum("im,ia->ima", r, r)  # r_mu r_a
    cross = _cross_matrix(r)                # (N, mu, a)

    # dE[i, mu, a]
    d_e = (j0[:, None, None] * eye
           + (k**2 / 2) * k2[:, None, None] * (3 * rr_out - rr[:, None, None] * eye))
    d_m = -1.5j * k * k1[:, None, None] * cross

    # QE[i, mu, nu, a]
    r_d = np.einsum("in,ma->imna", r, eye)          # r_nu delta_mu,a
    d_r = np.einsum("im,na->imna", r, eye)          # r_mu delta_nu,a
    r_dmn = np.einsum("ia,mn->imna", r, eye)        # r_a delta_mu,nu
    rrr = np.einsum("im,in,ia->imna", r, r, r)
    q_e = 3 * (k1[:, None, None, None] * (3 * (r_d + d_r) - 2 * r_dmn)
               + 2 * k**2 * k3[:, None, None, None]
               * (5 * rrr - rr[:, None, None, None] * (d_r + r_d) - rr[:, None, None, None] * r_dmn))
    rc = np.einsum("im,ina->imna", r, cross)        # r_mu (r x .)_nu
    q_m = -15j * k * k2[:, None, None, None] * (rc + rc.transpose(0, 2, 1, 3))

    w = np.concatenate([
        d_e.astype(complex), d_m,
        q_e.reshape(n_at, 9, 3).astype(complex), q_m.reshape(n_at, 9, 3),
    ], axis=1)  # (N, 24, 3)
    return w.transpose(1, 0, 2).reshape(N_MOMENT, 3 * n_at)


def multipole_expansion(solution, k: float = K_ATOM) -> MultipoleMoments:
    """Effective moments of one realization about the cloud centre."""
    w = moment_operator(solution.positions, k)
    return MultipoleMoments.from_vector(w @ np.asarray(solution.dipoles).reshape(-1))


@dataclass(frozen=True, eq=False)
class CrossSections:
    """Cross sections in units of lambda**2/(2 pi), keyed by multipole.

    ``incoh`` is the fluctuation route; when no fluctuation data is given it
    falls back to ``ext - coh`` per multipole.
    """

    coh: dict
    ext: dict
    incoh: dict = field(default_factory=dict)

    @property
    def coh_total(self):
        return sum(self.coh[m] for m in MULTIPOLES)

    @property
    def ext_total(self):
        return sum(self.ext[m] for m in MULTIPOLES)

    total = ext_total

    @property
    def incoh_total(self):
        return sum(self.incoh[m] for m in MULTIPOLES)

    @property
    def incoh_from_ext(self):
        return self.ext_total - self.coh_total


def _sumsq(a, axes):
    return np.sum(np.abs(a) ** 2, axis=axes)


def scattering_from_second_moments(second: MultipoleMoments, k: float = K_ATOM,
                                   amplitude: float = 1.0) -> dict:
    """Radiated power per multipole from per-component <|X|^2> values.

    ``second`` holds non-negative real second moments (|<X>|^2 or <|dX|^2>).
    """
    unit = core.cross_section_unit(k)
    dip = k**4 / (6 * np.pi * core.EPS0**2 * amplitude**2) / unit
    quad = k**6 / (720 * np.pi * core.EPS0**2 * amplitude**2) / unit
    return {
        "ED": dip * np.sum(second.dE, axis=-1),
        "MD": dip * np.sum(second.dM, axis=-1),
        "EQ": quad * np.sum(second.QE, axis=(-2, -1)),
        "MQ": quad * np.sum(second.QM, axis=(-2, -1)),
    }


def extinction_from_moments(moments: MultipoleMoments, fld: ExcitationField,
                            k: float = K_ATOM, origin=(0.0, 0.0, 0.0)) -> dict:
    """Extinction per multipole from (mean) moments and the incident field at the origin."""
    origin = np.asarray(origin, dtype=float)
    e0 = fld.eval_E(origin)
    h0 = fld.eval_H(origin)
    ge, gh = fld.eval_sym_gradients(origin)
    unit = core.cross_section_unit(k)
    amp2 = fld.amplitude**2
    dip = k / (core.EPS0 * amp2) / unit
    quad = k / (12 * core.EPS0 * amp2) / unit
    return {
        "ED": dip * np.imag(np.sum(moments.dE * np.conj(e0), axis=-1)),
        "MD": dip * np.imag(np.sum(moments.dM * core.Z0 * np.conj(h0), axis=-1)),
        "EQ": quad * np.imag(np.sum(moments.QE * np.conj(ge), axis=(-2, -1))),
        "MQ": quad * np.imag(np.sum(moments.QM * core.Z0 * np.conj(gh), axis=(-2, -1))),
    }


def cross_sections_from_moments(mean: MultipoleMoments, fld: ExcitationField,
                                fluctuations: MultipoleMoments | None = None,
                                k: float = K_ATOM) -> CrossSections:
    """Coherent, incoherent and extinction cross sections from moment statistics.

    Parameters
    ----------
    mean : MultipoleMoments
        Ensemble-averaged moments (or a single realization's moments).
    fld : ExcitationField
        Incident field; its value and gradients are taken at the origin.
    fluctuations : MultipoleMoments, optional
        Per-component <|dX|^2>. Without it the incoherent part is ext - coh.
    """
    if not isinstance(fld, ExcitationField):
        raise TypeError("cross_sections_from_moments needs an ExcitationField")
    absq = MultipoleMoments(np.abs(mean.dE) ** 2, np.abs(mean.dM) ** 2,
                            np.abs(mean.QE) ** 2, np.abs(mean.QM) ** 2)
    coh = scattering_from_second_moments(absq, k, fld.amplitude)
    ext = extinction_from_moments(mean, fld, k)
    if fluctuations is None:
        incoh = {m: ext[m] - coh[m] for m in MULTIPOLES}
    else:
        incoh = scattering_from_second_moments(fluctuations, k, fld.amplitude)
    return CrossSections(coh, ext, incoh)


@dataclass(frozen=True, eq=False)
class Polarizabilities:
    """Ensemble polarizabilities retrieved from single plane-wave statistics.

    Dipole values are in units of alpha0, quadrupole values in units of
    alpha0'. Fluctuation entries are normalized the same way (squared).
    Fields may be arrays over a detuning grid.
    """

    ed: np.ndarray
    md: np.ndarray
    eq: np.ndarray
    mq: np.ndarray
    ed_diag_fluct: np.ndarray = 0.0
    ed_offdiag_fluct: np.ndarray = 0.0
    md_diag_fluct: np.ndarray = 0.0
    md_offdiag_fluct: np.ndarray = 0.0
    eq_fluct: np.ndarray = 0.0
    mq_fluct: np.ndarray = 0.0
    ed_offdiag_mean: np.ndarray = 0.0
    ed_offdiag_se: np.ndarray = 0.0

    def as_dict(self) -> dict:
        return {"ED": self.ed, "MD": self.md, "EQ": self.eq, "MQ": self.mq}


def excitation_weights(variant, phi: float = 0.0, psi: float = np.pi / 4) -> dict:
    """Per-multipole weights multiplying |alpha|^2 and Im(alpha) for each variant."""
    variant = Variant(variant)
    if variant is Variant.SINGLE_PLANE_WAVE:
        return dict.fromkeys(MULTIPOLES, 1.0)
    c2 = np.cos(phi / 2) ** 2
    s2 = np.sin(phi / 2) ** 2
    mixed = s2 * c2
    quad = np.cos(2 * psi) ** 2 * c2**2 + np.sin(2 * psi) ** 2 * s2**2
    if variant is Variant.FOUR_WAVE_TE:
        return {"ED": c2**2, "MD": mixed, "EQ": mixed, "MQ": quad}
    return {"ED": mixed, "MD": c2**2, "EQ": quad, "MQ": mixed}


def cross_sections_from_polarizabilities(pol: Polarizabilities, variant=Variant.SINGLE_PLANE_WAVE,
                                         phi: float = 0.0, psi: float = np.pi / 4) -> CrossSections:
    """Closed-form cross sections (units lambda**2/2pi) from ensemble polarizabilities."""
    w = excitation_weights(variant, phi, psi)
    scale = {"ED": 3.0, "MD": 3.0, "EQ": 5.0, "MQ": 5.0}
    alphas = pol.as_dict()
    coh = {m: scale[m] * np.abs(alphas[m]) ** 2 * w[m] for m in MULTIPOLES}
    ext = {m: scale[m] * np.imag(alphas[m]) * w[m] for m in MULTIPOLES}
    return CrossSections(coh, ext)


def expected_moments(pol: Polarizabilities, fld: ExcitationField,
                     k: float = K_ATOM) -> MultipoleMoments:
    """Mean moments an isotropic ensemble with ``pol`` develops in ``fld``."""
    o = np.zeros(3)
    a0, a0q = core.alpha0(k), core.alpha0_quad(k)
    ge, gh = fld.eval_sym_gradients(o)
    ed, md, eq, mq = (np.asarray(pol.ed), np.asarray(pol.md), np.asarray(pol.eq), np.asarray(pol.mq))
    return MultipoleMoments(
        core.EPS0 * a0 * ed[..., None] * fld.eval_E(o),
        a0 * md[..., None] * fld.eval_H(o) / core.C_LIGHT,
        0.5 * core.EPS0 * a0q * eq[..., None, None] * ge,
        0.5 * a0q * mq[..., None, None] * gh / core.C_LIGHT,
    )


def exact_extinction(solution, fld: ExcitationField, k: float = K_ATOM) -> float:
    """Extinction of the full dipole set, k/(eps0 E0^2) sum Im(p_i . E_inc*)."""
    e_inc = fld.eval_E(solution.positions)
    val = k / (core.EPS0 * fld.amplitude**2) * np.sum(np.imag(np.sum(solution.dipoles * np.conj(e_inc), -1)))
    return float(val / core.cross_section_unit(k))


def exact_scattering(solution, k: float = K_ATOM, amplitude: float = 1.0) -> float:
    """Radiated power of the dipole set from the pairwise Im G bilinear form.

    The self term uses Im G(r, r) = k**3/(6 pi eps0) I, so a single dipole
    radiates k**4 |p|^2 / (6 pi eps0^2).
    """
    p = np.asarray(solution.dipoles).reshape(-1)
    img = core.radiative_coupling_matrix(solution.positions, k)
    val = k / (core.EPS0 * amplitude**2) * np.real(np.conj(p) @ img @ p)
    return float(val / core.cross_section_unit(k))


def far_field_amplitude(solution, k: float, directions) -> np.ndarray:
    """Transverse far-field vector sum_i (I - n n) p_i exp(-i k n.r_i) per direction."""
    n = np.asarray(directions, dtype=float)
    phase = np.exp(-1j * k * n @ np.asarray(solution.positions).T)  # (M, N)
    s = phase @ np.asarray(solution.dipoles)                          # (M, 3)
    return s - n * np.sum(n * s, axis=-1, keepdims=True)


def far_field_pattern(solution, k: float, directions) -> np.ndarray:
    """|far_field_amplitude|^2 per direction (unnormalized intensity)."""
    a = far_field_amplitude(solution, k, directions)
    return np.sum(np.abs(a) ** 2, axis=-1)


def pattern_to_cross_section(k: float = K_ATOM, amplitude: float = 1.0) -> float:
    """Factor turning far_field_pattern into dC/dOmega in units of lambda**2/2pi."""
    return k**4 / (16 * np.pi**2 * core.EPS0**2 * amplitude**2) / core.cross_section_unit(k)


def sphere_quadrature(n_theta: int = 64, n_phi: int = 128):
    """Gauss-Legendre (in cos theta) x uniform (in phi) product rule on the sphere.

    Returns directions (n_theta*n_phi, 3) and weights summing to 4 pi.
    """
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phis = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - x**2)
    dirs = np.stack([
        np.outer(st, np.cos(phis)), np.outer(st, np.sin(phis)), np.outer(x, np.ones(n_phi)),
    ], -1).reshape(-1, 3)
    weights = np.outer(wx, np.full(n_phi, 2 * np.pi / n_phi)).reshape(-1)
    return dirs, weights
