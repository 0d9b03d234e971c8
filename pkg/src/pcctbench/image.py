"""Square pixel images with physical units and channel tags."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

UNITS_ATTENUATION = "cm^-1"
UNITS_DENSITY = "g/cm^3"


@dataclass
class ImageGrid:
    """2-D image with a physical pixel pitch.

    data is indexed [iy, ix]; world coordinates place the grid centre at the
    origin with x increasing along columns and y along rows, so pixel (iy, ix)
    sits at ((ix - (n-1)/2) * pitch, (iy - (n-1)/2) * pitch).
    """

    data: np.ndarray
    pitch_cm: float
    units: str = UNITS_ATTENUATION
    channel: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {self.data.shape}")
        if self.pitch_cm <= 0:
            raise ValueError("pixel pitch must be positive")

    @property
    def grid_size(self) -> int:
        return self.data.shape[0]

    @property
    def field_of_view_cm(self) -> float:
        return self.grid_size * self.pitch_cm

    def with_data(self, data: np.ndarray, units: str | None = None) -> "ImageGrid":
        return replace(self, data=data, units=self.units if units is None else units)


def pixel_centers(n: int, pitch: float) -> np.ndarray:
    """World coordinates of pixel centres along one axis (length n, centred)."""
    return (np.arange(n) - (n - 1) / 2.0) * pitch


def inscribed_circle_mask(n: int, pitch: float, radius: float | None = None) -> np.ndarray:
    """Boolean mask of pixels inside the inscribed circle (or a given radius)."""
    c = pixel_centers(n, pitch)
    xx, yy = np.meshgrid(c, c, indexing="xy")
    r = (n * pitch) / 2.0 if radius is None else radius
    return xx * xx + yy * yy <= r * r
