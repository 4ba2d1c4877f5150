"""
One atom, then two
==================

Polarizability of a two-level atom, the optical theorem, and how a close
pair of atoms splits into super- and subradiant modes.
"""
import numpy as np

from atomcloud import (AtomModel, CloudRealization, alpha0, atomic_polarizability, exact_extinction,
                       exact_scattering, greens_tensor, single_plane_wave, solve_coupled_dipoles)

# %%
# A lossless atom on resonance has alpha = i alpha0, and its extinction cross
# section is exactly 3 in units of lambda^2 / (2 pi).
for det in (-2.0, -0.5, 0.0, 0.5, 2.0):
    a = atomic_polarizability(AtomModel(detuning=det)) / alpha0()
    print(f"detuning {det:+.1f}: alpha/alpha0 = {a:.3f}, Im - |.|^2 = {a.imag - abs(a) ** 2:.1e}")

pw = single_plane_wave()
one = solve_coupled_dipoles(CloudRealization(np.zeros((1, 3))), pw, AtomModel())
print("single atom C_ext =", exact_extinction(one, pw))

# %%
# Adding non-radiative loss breaks the equality: the atom now extinguishes
# more than it scatters.
lossy = atomic_polarizability(AtomModel(gamma_nr=0.5)) / alpha0()
print("lossy atom: Im =", lossy.imag, " |.|^2 =", abs(lossy) ** 2)

# %%
# The Green's tensor couples the atoms. Side by side at a tenth of a
# wavelength and driven in phase, the pair responds as one collective mode:
# its resonance is shifted several linewidths from the bare atom and broadened.
print("G between atoms 0.1 lambda apart along x:\n", np.round(greens_tensor([0.1, 0, 0], [0, 0, 0]), 2))
pair = CloudRealization(np.array([[-0.05, 0, 0], [0.05, 0, 0]]))
ypol = single_plane_wave(polarization=(0, 1, 0))
for det in np.linspace(-2, 6, 9):
    sol = solve_coupled_dipoles(pair, ypol, AtomModel(detuning=det))
    print(f"detuning {det:+.1f}: C_sca = {exact_scattering(sol):.3f}, C_ext = {exact_extinction(sol, ypol):.3f}")
