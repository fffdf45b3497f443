"""Finite-temperature self-energy diagrams with retarded cutting rules.

Library layout:

- :mod:`retcut.propagator` -- discrete-level systems and the bare
  propagator components, including the square-root leg factorization.
- :mod:`retcut.diagram` -- self-energy diagrams as graphs, topology
  queries, Feynman prefactors and the series generators.
- :mod:`retcut.cutting` -- retarded cut expansions, permutation
  machinery, minimal PSD completion, gluing.
- :mod:`retcut.retarded` -- frequency- and time-domain evaluation of
  multi-argument retarded half-diagram functions.
- :mod:`retcut.matsubara` -- imaginary-frequency evaluation and the
  analytic-continuation check.
- :mod:`retcut.assembly` -- self-energies, rate function, Dyson
  equation, spectral functions and positivity reports.
- :mod:`retcut.edoracle` -- exact diagonalization reference for tiny
  systems.
- :mod:`retcut.cli` -- command-line interface and file formats.
"""

from .propagator import SystemSpec, Propagator, fermi
from .diagram import ApproximationSeries, generate_series
from .cutting import (
    enumerate_retarded_cuts, expand_series, minimal_psd_extension, is_psd_form,
)
from .assembly import (
    PoleSum, sigma_lesser, sigma_greater, gamma, dyson_spectral, psd_report,
)

__version__ = "0.1.0"
