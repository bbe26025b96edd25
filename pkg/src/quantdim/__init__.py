"""Quantization dimensions and coefficients of measures on the unit cube.

Modules
-------
dyadic      measure descriptions and dyadic cube mass tables
spectra     L^q spectrum, J-partition function, critical exponent
partitions  optimal dyadic partitions, entropy and coarse counts
quantizer   distortion, codebook search, error curves
oracles     closed forms and registered example densities
acceptance  acceptance checks used by ``quantdim verify``
"""

__version__ = "0.1.0"

from .dyadic import (Atomic, CubeIndex, Density, DyadicMeasure, IfsCascade, MeasureSpec,  # noqa: E402
                     build_measure, dim_infty_estimate, parse_spec, preset, preset_names)
from .errors import (BracketError, CapacityError, ConfigError, DepthError, DivergenceError,  # noqa: E402
                     DomainError, NoCrossingError, QuantdimError)
from .oracles import cascade_beta, example_density, registered_names, uniform_midpoint_error  # noqa: E402
from .partitions import (CascadeCounter, greedy_partition, gamma_curve, partition_entropy,  # noqa: E402
                         coarse_counts, optimized_coarse_dimension)
from .quantizer import distortion, error_curve, optimize_codebook, phi_r  # noqa: E402
from .spectra import (DepthProtocol, beta_curve, critical_q, d_zero, qr_bounds, renyi,  # noqa: E402
                      tau_curve)

__all__ = [
    "Atomic", "CubeIndex", "Density", "DyadicMeasure", "IfsCascade", "MeasureSpec", "build_measure",
    "dim_infty_estimate", "parse_spec", "preset", "preset_names", "BracketError", "CapacityError",
    "ConfigError", "DepthError", "DivergenceError", "DomainError", "NoCrossingError", "QuantdimError",
    "cascade_beta", "example_density", "registered_names", "uniform_midpoint_error", "CascadeCounter",
    "greedy_partition", "gamma_curve", "partition_entropy", "coarse_counts",
    "optimized_coarse_dimension", "distortion", "error_curve", "optimize_codebook", "phi_r",
    "DepthProtocol", "beta_curve", "critical_q", "d_zero", "qr_bounds", "renyi", "tau_curve",
]
