"""Attenuation <-> density conversions flanking the denoiser.

Per-channel: density = attenuation / kappa, attenuation = density * kappa,
with kappa the channel's reference mass attenuation coefficient (cm^2/g).
The channel-sum image uses the flux-weighted kappa_sum.
"""

from __future__ import annotations

import numpy as np

from pcctbench.errors import ConfigurationError
from pcctbench.image import ImageGrid, UNITS_ATTENUATION, UNITS_DENSITY
from pcctbench.recon import SpectralImageSet


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not kappa > 0:
        raise ConfigurationError(f"kappa must be > 0, got {kappa}")
    return kappa


def attenuation_to_density(img: ImageGrid, kappa: float) -> ImageGrid:
    """Divide by kappa; units flip cm^-1 -> g/cm^3, channel tag preserved."""
    kappa = _check_kappa(kappa)
    if img.units != UNITS_ATTENUATION:
        raise ConfigurationError(f"expected attenuation image, got units {img.units!r}")
    return img.with_data(img.data / kappa, units=UNITS_DENSITY)


def density_to_attenuation(img: ImageGrid, kappa: float) -> ImageGrid:
    """Multiply by kappa; exact inverse of attenuation_to_density."""
    kappa = _check_kappa(kappa)
    if img.units != UNITS_DENSITY:
        raise ConfigurationError(f"expected density image, got units {img.units!r}")
    return img.with_data(img.data * kappa, units=UNITS_ATTENUATION)


def image_set_to_density(imgset: SpectralImageSet, model) -> SpectralImageSet:
    """Convert every channel of a reconstruction set to density units."""
    if model.kappa_ref is None or model.kappa_sum is None:
        raise ConfigurationError("spectral model lacks kappa_ref / kappa_sum")
    bins = [attenuation_to_density(img, model.kappa_ref[k])
            for k, img in enumerate(imgset.bin_images)]
    total = attenuation_to_density(imgset.sum_image, model.kappa_sum)
    return SpectralImageSet(bins, total, imgset.phantom_id, imgset.seed)


def flux_weighted_kappa_sum(weights, kappa_ref) -> float:
    """Effective kappa for the channel-sum image: sum_k w_k * kappa_k."""
    weights = np.asarray(weights, dtype=float)
    kappa_ref = np.asarray(kappa_ref, dtype=float)
    if weights.shape != kappa_ref.shape:
        raise ConfigurationError("weights and kappa_ref must align")
    return float(weights @ kappa_ref)
