"""Equal-spaced (flat detector) fan-beam geometry and forward projection.

Conventions: at view angle beta the source sits at SOD * (-sin b, cos b), the
central ray points at the origin, and the detector line through the point
SDD further along carries coordinate u increasing along (cos b, sin b). The
first view is at beta = 0 and angles are uniform over angular_range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pcctbench.errors import ConfigurationError
from pcctbench.image import ImageGrid, pixel_centers
from pcctbench import phantom as phantom_mod


@dataclass(frozen=True)
class FanBeamGeometry:
    source_to_origin: float = 142.0  # cm
    source_to_detector: float = 180.0  # cm
    num_detectors: int = 512
    detector_pitch: float = 0.1  # cm
    num_views: int = 512
    angular_range: float = 2.0 * math.pi  # radians

    def __post_init__(self):
        if not (self.source_to_detector > self.source_to_origin > 0):
            raise ConfigurationError(
                "need source_to_detector > source_to_origin > 0, got "
                f"{self.source_to_detector} / {self.source_to_origin}"
            )
        if self.num_detectors < 1 or self.num_views < 1:
            raise ConfigurationError("num_detectors and num_views must be >= 1")
        if self.detector_pitch <= 0:
            raise ConfigurationError("detector_pitch must be positive")
        if self.angular_range <= 0:
            raise ConfigurationError("angular_range must be positive")

    @property
    def view_angles(self) -> np.ndarray:
        return np.arange(self.num_views) * (self.angular_range / self.num_views)

    @property
    def detector_coords(self) -> np.ndarray:
        """Signed detector-element centre coordinates, centred on the central ray."""
        return (np.arange(self.num_detectors) - (self.num_detectors - 1) / 2.0) * self.detector_pitch

    @property
    def half_fan_angle(self) -> float:
        half_width = self.num_detectors * self.detector_pitch / 2.0
        return math.atan2(half_width, self.source_to_detector)

    @property
    def fov_radius(self) -> float:
        """Radius of the fully sampled region around the isocenter."""
        return self.source_to_origin * math.sin(self.half_fan_angle)

    def to_dict(self) -> dict:
        return {
            "source_to_origin": self.source_to_origin,
            "source_to_detector": self.source_to_detector,
            "num_detectors": self.num_detectors,
            "detector_pitch": self.detector_pitch,
            "num_views": self.num_views,
            "angular_range": self.angular_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FanBeamGeometry":
        return cls(**d)


def make_geometry(**overrides) -> FanBeamGeometry:
    """Build a geometry from the paper-scale defaults plus overrides."""
    try:
        return FanBeamGeometry(**overrides)
    except TypeError as exc:
        raise ConfigurationError(f"unknown geometry field: {exc}") from exc


@dataclass
class Sinogram:
    data: np.ndarray  # (num_views, num_detectors) line integrals
    geometry: FanBeamGeometry
    channel: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        expected = (self.geometry.num_views, self.geometry.num_detectors)
        if self.data.shape != expected:
            raise ValueError(f"sinogram shape {self.data.shape} != geometry {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sinogram contains non-finite values")


def ray_bundle(geom: FanBeamGeometry, oversample: int = 1):
    """Source points and unit directions for every (view, detector) ray.

    With oversample m > 1, each detector element is split into m equally
    spaced sub-rays. Returns (src, direction), each (V, D*m, 2).
    """
    beta = geom.view_angles
    u = geom.detector_coords
    if oversample > 1:
        offsets = ((np.arange(oversample) + 0.5) / oversample - 0.5) * geom.detector_pitch
        u = (u[:, None] + offsets[None, :]).ravel()
    sin_b, cos_b = np.sin(beta), np.cos(beta)
    src = geom.source_to_origin * np.stack([-sin_b, cos_b], axis=1)  # (V, 2)

    sdd = geom.source_to_detector
    norm = np.sqrt(sdd * sdd + u * u)
    # direction = (SDD * central_dir + u * detector_dir) / norm
    dir_x = (sdd * sin_b[:, None] + u[None, :] * cos_b[:, None]) / norm[None, :]
    dir_y = (-sdd * cos_b[:, None] + u[None, :] * sin_b[:, None]) / norm[None, :]
    direction = np.stack([dir_x, dir_y], axis=2)  # (V, D*m, 2)
    src = np.broadcast_to(src[:, None, :], direction.shape)
    return src, direction


def forward_project(image: ImageGrid, geom: FanBeamGeometry, oversample: int = 1) -> Sinogram:
    """Line integrals of a pixel image along every ray, by Joseph's method.

    The image is swept along each ray's dominant axis; at every pixel-centre
    line crossing, the two neighbouring pixels are linearly interpolated and
    weighted by the crossing length pitch / |dominant direction component|.
    """
    n = image.grid_size
    if image.data.shape[0] != image.data.shape[1]:
        raise ValueError("image must be square")
    if oversample < 1:
        raise ConfigurationError("oversample must be >= 1")
    pitch = image.pitch_cm
    img = np.ascontiguousarray(image.data)

    src, direction = ray_bundle(geom, oversample)
    sx = src[..., 0].ravel()
    sy = src[..., 1].ravel()
    dx = direction[..., 0].ravel()
    dy = direction[..., 1].ravel()

    centers = pixel_centers(n, pitch)
    out = np.zeros(sx.shape[0])

    x_dom = np.abs(dx) >= np.abs(dy)
    for dominant in (True, False):
        sel = x_dom if dominant else ~x_dom
        if not np.any(sel):
            continue
        if dominant:
            s_par, s_perp = sx[sel], sy[sel]
            d_par, d_perp = dx[sel], dy[sel]
        else:
            s_par, s_perp = sy[sel], sx[sel]
            d_par, d_perp = dy[sel], dx[sel]
        acc = np.zeros(s_par.shape[0])
        half = (n - 1) / 2.0
        slope = d_perp / d_par
        for i in range(n):
            # perpendicular coordinate where each ray crosses this slab
            t = (centers[i] - s_par) / d_par
            f = (s_perp + t * d_perp) / pitch + half
            i0 = np.floor(f).astype(np.int64)
            frac = f - i0
            ok0 = (i0 >= 0) & (i0 < n)
            ok1 = (i0 >= -1) & (i0 < n - 1)
            line = img[:, i] if dominant else img[i, :]
            acc += np.where(ok0, line[np.clip(i0, 0, n - 1)] * (1.0 - frac), 0.0)
            acc += np.where(ok1, line[np.clip(i0 + 1, 0, n - 1)] * frac, 0.0)
        out[sel] = acc * (pitch / np.abs(d_par))

    data = out.reshape(geom.num_views, geom.num_detectors, oversample).mean(axis=2) \
        if oversample > 1 else out.reshape(geom.num_views, geom.num_detectors)
    return Sinogram(data, geom, channel=image.channel)


def phantom_chords(phantom, geom: FanBeamGeometry, oversample: int = 1) -> np.ndarray:
    """Visible chord lengths of every ellipse along every ray, (V*D*m, E)."""
    src, direction = ray_bundle(geom, oversample)
    return phantom_mod.visible_chords(
        phantom, src.reshape(-1, 2), direction.reshape(-1, 2)
    )


def project_phantom_analytic(phantom, geom: FanBeamGeometry, bin_index: int,
                             spectral, materials=None,
                             chords: np.ndarray | None = None) -> Sinogram:
    """Exact noise-free sinogram of an ellipse phantom for one energy bin.

    Pass precomputed `chords` (from phantom_chords) to amortize the geometry
    work across bins; the chord structure does not depend on the bin.
    """
    spectral.check_bin(bin_index)
    if materials is None:
        materials = phantom_mod.builtin_materials(spectral.bin_centers_kev)
    if chords is None:
        chords = phantom_chords(phantom, geom)
    mu = phantom_mod.ellipse_mu_values(phantom, bin_index, materials)
    data = (chords @ mu).reshape(geom.num_views, geom.num_detectors)
    return Sinogram(data, geom, channel=f"bin{bin_index}")
