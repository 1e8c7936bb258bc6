"""Low-rank tensor-train eigensolvers for vibrational spectra.

The package builds vibrational Hamiltonians as TT operators on a DVR grid
and computes their lowest eigenpairs with block LOBPCG and simultaneous
inverse iteration, both working on fixed-rank TT manifolds.
"""

from .blockvector import BlockVector
from .eigen import SolverConfig, SpectrumReport, mp_lobpcg, mp_sii, pinvit
from .errors import TTError
from .models import (HamiltonianSpec, assemble_coupled_oscillator, assemble_hamiltonian,
                     coupled_oscillator_spec, harmonic_guess, lowest_coupled_energies)
from .tt import TtOperator, TtTensor

__version__ = "0.1.0"

__all__ = ["BlockVector", "HamiltonianSpec", "SolverConfig", "SpectrumReport", "TTError",
           "TtOperator", "TtTensor", "assemble_coupled_oscillator", "assemble_hamiltonian",
           "coupled_oscillator_spec", "harmonic_guess", "lowest_coupled_energies",
           "mp_lobpcg", "mp_sii", "pinvit"]
