import cmath

import numpy as np
import pytest

from atomcloud import core, solver
from atomcloud.core import K_ATOM, AtomModel, alpha0, atomic_polarizability
from atomcloud.ensemble import realization_seed, sample_realization
from atomcloud.excitation import four_wave_te, single_plane_wave
from atomcloud.multipole import exact_scattering
from atomcloud.solver import (CloudRealization, DegenerateRealizationError, solve_coupled_dipoles,
                              solve_detuning_sweep)

k = K_ATOM


def _cloud(i=0, spec=core.CloudSpec()):
    return sample_realization(spec, realization_seed(11, i))


def test_single_atom_at_origin():
    model = AtomModel(detuning=0.3)
    sol = solve_coupled_dipoles(CloudRealization(np.zeros((1, 3))), single_plane_wave(), model)
    a = atomic_polarizability(model)
    np.testing.assert_allclose(sol.dipoles, [[a, 0, 0]], rtol=1e-15, atol=1e-18)
    assert sol.residual_norm <= 1e-15


@pytest.mark.parametrize("detuning", [0.0, 1.0])
def test_far_separated_pair_decouples(detuning):
    # 10 lambda apart on z: the correction is first order in 3/(2 zeta)|alpha/alpha0|
    pos = np.array([[0, 0, -5.0], [0, 0, 5.0]])
    fld = single_plane_wave()
    model = AtomModel(detuning=detuning)
    sol = solve_coupled_dipoles(CloudRealization(pos), fld, model)
    a = atomic_polarizability(model)
    free = a * fld.eval_E(pos)
    err = np.abs(sol.dipoles - free).max(axis=1) / abs(a)
    first_order = 3 / (2 * 20 * np.pi) * abs(a / alpha0())
    np.testing.assert_allclose(err, first_order, rtol=0.05)
    assert np.all(err < 0.025)


def _pair_closed_form(d, detuning):
    # atoms at -+d/2 on z, x-polarized wave along z: only x components, coupled
    # through the transverse Green's channel a = (3/(2 alpha0)) e^{i z} g1(z)
    z = k * d
    g1 = 1 / z - 1 / z**3 + 1j / z**2
    a = 3 / (2 * alpha0()) * cmath.exp(1j * z) * g1
    inv_alpha = 1 / atomic_polarizability(AtomModel(detuning=detuning))
    e1, e2 = cmath.exp(-1j * k * d / 2), cmath.exp(1j * k * d / 2)
    s = (e1 + e2) / (inv_alpha - a)      # symmetric mode
    t = (e1 - e2) / (inv_alpha + a)      # antisymmetric mode
    return (s + t) / 2, (s - t) / 2


@pytest.mark.parametrize("detuning", [0.0, -1.3, 2.0])
def test_pair_matches_eigenmode_solution(detuning):
    d = 0.1
    pos = np.array([[0, 0, -d / 2], [0, 0, d / 2]])
    sol = solve_coupled_dipoles(CloudRealization(pos), single_plane_wave(), AtomModel(detuning=detuning))
    p1, p2 = _pair_closed_form(d, detuning)
    np.testing.assert_allclose(sol.dipoles[:, 0], [p1, p2], rtol=1e-12)
    np.testing.assert_allclose(sol.dipoles[:, 1:], 0, atol=1e-15)


def test_pair_symmetric_mode_radiates_superradiantly():
    # side-by-side pair driven in phase: radiated power exceeds that of two
    # independent dipoles with the same moments, by the interference term
    d = 0.1
    pos = np.array([[-d / 2, 0, 0], [d / 2, 0, 0]])
    fld = single_plane_wave(polarization=(0, 1, 0))
    sol = solve_coupled_dipoles(CloudRealization(pos), fld, AtomModel(detuning=0.0))
    p = sol.dipoles[0, 1]
    np.testing.assert_allclose(sol.dipoles[1, 1], p, rtol=1e-12)
    z = k * d
    j0 = np.sin(z) / z
    j1 = np.sin(z) / z**2 - np.cos(z) / z
    self_term = k**3 / (6 * np.pi)
    cross_term = k**3 / (4 * np.pi) * (j0 - j1 / z)
    unit = core.cross_section_unit()
    expected = k * 2 * abs(p) ** 2 * (self_term + cross_term) / unit
    independent = k * 2 * abs(p) ** 2 * self_term / unit
    assert exact_scattering(sol) == pytest.approx(expected, rel=1e-12)
    assert exact_scattering(sol) > 1.5 * independent


def test_fixed_point_equation_holds():
    cloud = _cloud(0)
    fld = four_wave_te(0.8)
    model = AtomModel(detuning=0.4)
    sol = solve_coupled_dipoles(cloud, fld, model)
    a = atomic_polarizability(model)
    g = core.coupling_matrix(cloud.positions)
    rhs = a * (fld.eval_E(cloud.positions).reshape(-1) + g @ sol.dipoles.reshape(-1))
    np.testing.assert_allclose(sol.dipoles.reshape(-1), rhs, rtol=1e-10, atol=1e-14)
    assert sol.residual_norm <= solver.RESIDUAL_LIMIT


def test_linearity_in_amplitude():
    cloud = _cloud(1)
    model = AtomModel(detuning=-0.5)
    base = solve_coupled_dipoles(cloud, single_plane_wave(), model).dipoles
    s = 0.7 - 1.9j
    fld = single_plane_wave()
    scaled_field = type(fld)(fld.variant, tuple(type(b)(b.direction, s * b.e_amp, b.phase) for b in fld.beams),
                             fld.amplitude, fld.phi, fld.psi, fld.k)
    scaled = solve_coupled_dipoles(cloud, scaled_field, model).dipoles
    np.testing.assert_allclose(scaled, s * base, rtol=1e-13, atol=1e-16)


def test_permutation_invariance():
    cloud = _cloud(2)
    perm = np.random.default_rng(0).permutation(cloud.n_atoms)
    model = AtomModel(detuning=0.2)
    a = solve_coupled_dipoles(cloud, single_plane_wave(), model).dipoles
    b = solve_coupled_dipoles(CloudRealization(cloud.positions[perm]), single_plane_wave(), model).dipoles
    assert np.max(np.abs(a[perm] - b)) <= 1e-12 * np.max(np.abs(a))


def test_sweep_matches_direct_solves(monkeypatch):
    monkeypatch.setattr(solver, "DIRECT_SWEEP_MAX", 0)  # exercise the eigenbasis path
    cloud = _cloud(3)
    fields = [single_plane_wave(), four_wave_te(1.0)]
    det = np.linspace(-3, 3, 7)
    inv_alpha = 1 / core.polarizability_array(det)
    rhs = np.stack([f.eval_E(cloud.positions).reshape(-1) for f in fields], -1)
    x, cond, res = solve_detuning_sweep(cloud.positions, inv_alpha, rhs)
    assert x.shape == (7, 75, 2)
    assert np.all(res <= solver.RESIDUAL_LIMIT)
    for i, d in enumerate(det):
        for j, f in enumerate(fields):
            direct = solve_coupled_dipoles(cloud, f, AtomModel(detuning=d)).dipoles.reshape(-1)
            np.testing.assert_allclose(x[i, :, j], direct, rtol=1e-9, atol=1e-12 * np.abs(direct).max())
    # the eigenbasis bound is an upper bound on the 1-norm condition number
    m = solver.interaction_matrix(cloud.positions, inv_alpha)
    exact = np.array([np.linalg.cond(mi, 1) for mi in m])
    assert np.all(cond >= exact * (1 - 1e-9))


def test_sweep_falls_back_to_direct_solve(monkeypatch):
    cloud = _cloud(4)
    inv_alpha = 1 / core.polarizability_array([0.0, 1.0])
    rhs = single_plane_wave().eval_E(cloud.positions).reshape(-1, 1)
    monkeypatch.setattr(solver, "DIRECT_SWEEP_MAX", 0)
    expected, _, _ = solve_detuning_sweep(cloud.positions, inv_alpha, rhs)
    monkeypatch.setattr(solver, "RESIDUAL_LIMIT", 0.0)  # force every point through the fallback
    x, _, _ = solve_detuning_sweep(cloud.positions, inv_alpha, rhs)
    np.testing.assert_allclose(x, expected, rtol=1e-9)


def test_short_and_long_sweeps_agree(monkeypatch):
    cloud = _cloud(6)
    inv_alpha = 1 / core.polarizability_array(np.linspace(-2, 2, 4))
    rhs = single_plane_wave().eval_E(cloud.positions).reshape(-1, 1)
    direct, _, _ = solve_detuning_sweep(cloud.positions, inv_alpha, rhs)
    monkeypatch.setattr(solver, "DIRECT_SWEEP_MAX", 0)
    eigen, _, _ = solve_detuning_sweep(cloud.positions, inv_alpha, rhs)
    np.testing.assert_allclose(eigen, direct, rtol=1e-9, atol=1e-12 * np.abs(direct).max())


def test_ill_conditioned_system_is_rejected(monkeypatch):
    monkeypatch.setattr(solver, "COND_LIMIT", 1.0)
    with pytest.raises(DegenerateRealizationError):
        solve_coupled_dipoles(_cloud(5), single_plane_wave(), AtomModel())


def test_singular_matrix_is_rejected():
    m = np.zeros((1, 3, 3), dtype=complex)
    with pytest.raises(DegenerateRealizationError):
        solver.solve_stack(m, np.ones((3, 1)))
