"""Spike-direction estimation from modulo-folded Gaussian measurements.

Library layout:
  rngstat     seedable counter-based streams, erf / chi-square numerics
  linalg      Jacobi eigensolver, Cholesky, exact integer-matrix arithmetic
  model       spiked sampling, the folding channel, sample classification
  estimator   ball-truncated PCA, p_ball, spike-strength inversion
  lattice     LLL, integer-forcing and MAP unwrapping decoders
  experiments experiment drivers and Monte-Carlo verification checks
  cli         command-line front end (fig3a, fig3b, verify, estimate, decode)
"""

__version__ = "0.1.0"

from .estimator import (align_sign, default_radius, estimate_nu,
                        estimate_spike, p_ball)
from .lattice import (if_decode, integer_forcing_matrix, lll_reduce,
                      map_decode_bruteforce, trivial_decode)
from .model import ModuloChannel, SpikedModel, apply_channel, sample_spiked
from .rngstat import RngStream

__all__ = [
    "RngStream", "SpikedModel", "ModuloChannel", "sample_spiked",
    "apply_channel", "estimate_spike", "estimate_nu", "align_sign",
    "default_radius", "p_ball", "lll_reduce", "integer_forcing_matrix",
    "if_decode", "map_decode_bruteforce", "trivial_decode",
]
