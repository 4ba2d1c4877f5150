"""Coupled-dipole Monte Carlo model of a subwavelength cloud of cold atoms.

The cloud is treated as one effective scatterer whose coherent and incoherent
electric/magnetic dipole and quadrupole response is computed from ensembles of
random configurations.
"""
from .core import (K_ATOM, AtomModel, CloudSpec, SingularSeparationError, alpha0, alpha0_quad,
                   atomic_polarizability, coupling_matrix, greens_tensor, spherical_bessel_kernel)
from .ensemble import (ConservationReport, DegenerateSpecError, EnsembleConfig, EnsembleStatistics,
                       NumericalDegeneracyError, conservation_check, retrieve_polarizabilities,
                       run_ensemble, run_pattern, sample_realization, verify_selective_excitation)
from .excitation import ExcitationField, Variant, four_wave_te, four_wave_tm, make_field, single_plane_wave
from .multipole import (CrossSections, MultipoleMoments, Polarizabilities, cross_sections_from_moments,
                        cross_sections_from_polarizabilities, exact_extinction, exact_scattering,
                        far_field_pattern, multipole_expansion)
from .solver import CloudRealization, DegenerateRealizationError, DipoleSolution, solve_coupled_dipoles

__version__ = "0.1.0"
