"""Photon-counting spectral CT simulation and denoising workbench.

Pipeline: ellipse phantoms -> multi-bin noisy sinograms -> fan-beam FBP
-> density conversion -> denoiser training datasets -> evaluation.
"""

from pcctbench.errors import ConfigurationError, S2TFormatError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "S2TFormatError", "__version__"]
