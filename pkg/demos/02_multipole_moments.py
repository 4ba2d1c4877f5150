"""
Multipole moments of one cloud
==============================

Solve one random 25-atom configuration and describe its response by electric
and magnetic dipole and quadrupole moments.
"""
import numpy as np

from atomcloud import (AtomModel, CloudSpec, cross_sections_from_moments, exact_extinction,
                       exact_scattering, multipole_expansion, sample_realization,
                       single_plane_wave, solve_coupled_dipoles)
from atomcloud.ensemble import realization_seed

pw = single_plane_wave()

# %%
# A cloud of radius 0.2 lambda is drawn reproducibly from a seed.
cloud = sample_realization(CloudSpec(25, 0.2), realization_seed(master_seed=0, index=0))
sol = solve_coupled_dipoles(cloud, pw, AtomModel(detuning=0.0))
mom = multipole_expansion(sol)
print("dE =", np.round(mom.dE, 4))
print("dM =", np.round(mom.dM, 4))
print("QE symmetric:", np.allclose(mom.QE, mom.QE.T), " trace:", abs(np.trace(mom.QE)))

# %%
# Energy is conserved exactly: the extinction from the optical theorem equals
# the power radiated by all the dipoles.
ext, sca = exact_extinction(sol, pw), exact_scattering(sol)
print(f"exact extinction {ext:.6f}, exact scattering {sca:.6f}")

# %%
# Keeping only dipoles and quadrupoles captures most of it; the rest is octupole
# and higher, which grows with the cloud size.
cs = cross_sections_from_moments(mom, pw)
for m in ("ED", "MD", "EQ", "MQ"):
    print(f"{m}: radiated {cs.coh[m]:.4f}")
print(f"truncated total {cs.coh_total:.4f} ({cs.coh_total / ext - 1:+.2%} vs exact)")

for radius in (0.05, 0.1, 0.2, 0.3):
    errs = []
    for i in range(30):
        c = sample_realization(CloudSpec(25, radius, 1e-4), realization_seed(1, i))
        s = solve_coupled_dipoles(c, pw, AtomModel())
        t = cross_sections_from_moments(multipole_expansion(s), pw).coh_total
        errs.append(abs(t / exact_extinction(s, pw) - 1))
    print(f"R = {radius}: median truncation error {np.median(errs):.2%}, max {max(errs):.2%}")
