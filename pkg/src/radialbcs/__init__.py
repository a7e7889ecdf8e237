"""Translation-invariant BCS theory with a radial pair interaction.

Sector critical temperatures, self-consistent gap functions, free energies,
and numerical checks of the spectral structure near the transition, in 2D
(all even angular-momentum sectors) and 3D (s-wave).
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .discretization import GridFunction, RadialGrid, build_grid, default_p_max, inner_product
from .gap import (BcsState, GapFunction, construct_state, free_energy_relative, gap_map,
                  solve_gap)
from .potentials import (PotentialSpec, SectorKernel, angular_kernel, assemble_sector_kernel,
                         assemble_sector_kernels, fourier_hat)
from .spectral import (CriticalReport, DispersionParams, SpectralResult, assemble_operator,
                       critical_report, critical_temperature_sector, kt_delta_symbol,
                       kt_symbol, lowest_eigenvalues, positivity_check)
from .analysis import (CurveSet, RotationTestReport, eigenvalue_curves, rotation_test,
                       scaling_fit, weak_coupling_sector)

__all__ = [
    "BACKEND", "GridFunction", "RadialGrid", "build_grid", "default_p_max", "inner_product",
    "BcsState", "GapFunction", "construct_state", "free_energy_relative", "gap_map",
    "solve_gap", "PotentialSpec", "SectorKernel", "angular_kernel", "assemble_sector_kernel",
    "assemble_sector_kernels", "fourier_hat", "CriticalReport", "DispersionParams",
    "SpectralResult", "assemble_operator", "critical_report", "critical_temperature_sector",
    "kt_delta_symbol", "kt_symbol", "lowest_eigenvalues", "positivity_check", "CurveSet",
    "RotationTestReport", "eigenvalue_curves", "rotation_test", "scaling_fit",
    "weak_coupling_sector",
]
