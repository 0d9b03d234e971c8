"""Analytic ellipse phantoms: materials, rasterization and exact line integrals.

Overlap semantics are "last ellipse wins": a later ellipse overwrites earlier
ones where they overlap, both in the rasterizer and in the closed-form line
integrals, so the two paths describe the same object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from pcctbench.errors import ConfigurationError
from pcctbench.image import ImageGrid, UNITS_ATTENUATION, pixel_centers

# Parameter value standing in for "ray misses the ellipse"; far beyond any
# physical ray parameter (distances are tens of cm).
_MISS = 1.0e30


@dataclass(frozen=True)
class Material:
    """A material with one effective mass attenuation coefficient per bin."""

    id: str
    density_default: float  # g/cm^3
    mu_over_rho: tuple  # cm^2/g, indexed by energy-bin

    def __post_init__(self):
        if any(k <= 0 for k in self.mu_over_rho):
            raise ConfigurationError(f"material {self.id!r}: all kappa must be > 0")

    def kappa(self, bin_index: int) -> float:
        if not 0 <= bin_index < len(self.mu_over_rho):
            raise ConfigurationError(
                f"material {self.id!r} has no kappa for bin {bin_index}"
            )
        return self.mu_over_rho[bin_index]


@dataclass(frozen=True)
class Ellipse:
    center_x: float
    center_y: float
    semi_axis_a: float
    semi_axis_b: float
    rotation: float  # radians, counter-clockwise
    material: str
    density: float  # g/cm^3

    def __post_init__(self):
        if self.semi_axis_a <= 0 or self.semi_axis_b <= 0:
            raise ConfigurationError("ellipse semi-axes must be positive")
        if self.density < 0:
            raise ConfigurationError("ellipse density must be >= 0")


@dataclass
class Phantom:
    """Ordered ellipse list; later entries overwrite earlier ones in overlap."""

    ellipses: list
    field_of_view: float  # cm, square side of the target image

    def __post_init__(self):
        if self.field_of_view <= 0:
            raise ConfigurationError("field of view must be positive")
        r = self.field_of_view / 2.0
        for e in self.ellipses:
            reach = math.hypot(e.center_x, e.center_y) + max(e.semi_axis_a, e.semi_axis_b)
            if reach > r * (1.0 + 1e-12):
                raise ConfigurationError(
                    f"ellipse at ({e.center_x:g},{e.center_y:g}) does not fit inside "
                    f"the reconstruction circle of diameter {self.field_of_view:g} cm"
                )


# ----------------------------------------------------------------------
# Materials
# ----------------------------------------------------------------------

def _reference_table() -> dict:
    with resources.files("pcctbench.data").joinpath("mass_attenuation_reference.json").open() as fh:
        return json.load(fh)


def kappa_at_energies(material_id: str, energies_kev) -> np.ndarray:
    """Effective mu/rho at the given energies, log-log interpolated from the
    bundled reference table."""
    table = _reference_table()
    if material_id not in table["materials"]:
        raise ConfigurationError(f"unknown material id {material_id!r}")
    e_ref = np.asarray(table["energies_kev"], dtype=float)
    k_ref = np.asarray(table["materials"][material_id]["mu_over_rho"], dtype=float)
    e = np.asarray(energies_kev, dtype=float)
    if e.min() < e_ref.min() or e.max() > e_ref.max():
        raise ConfigurationError(
            f"energy outside reference table range [{e_ref.min():g}, {e_ref.max():g}] keV"
        )
    return np.exp(np.interp(np.log(e), np.log(e_ref), np.log(k_ref)))


def builtin_materials(bin_centers_kev) -> dict:
    """Water / bone / soft-tissue materials with per-bin kappa at the given
    bin-centre energies."""
    table = _reference_table()
    out = {}
    for mid, entry in table["materials"].items():
        kappas = kappa_at_energies(mid, bin_centers_kev)
        out[mid] = Material(mid, entry["density_default"], tuple(float(k) for k in kappas))
    return out


def load_materials(path) -> dict:
    """Read a materials JSON file: {id: {density_default, mu_over_rho: [...]}}."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read materials file {path}: {exc}") from exc
    out = {}
    for mid, entry in raw.items():
        out[mid] = Material(mid, float(entry["density_default"]),
                            tuple(float(k) for k in entry["mu_over_rho"]))
    return out


def ellipse_mu_values(phantom, bin_index, materials) -> np.ndarray:
    """Linear attenuation density*kappa per ellipse for one bin."""
    mu = np.empty(len(phantom.ellipses))
    for i, e in enumerate(phantom.ellipses):
        if e.material not in materials:
            raise ConfigurationError(f"unknown material id {e.material!r}")
        mu[i] = e.density * materials[e.material].kappa(bin_index)
    return mu


# ----------------------------------------------------------------------
# Rasterization
# ----------------------------------------------------------------------

def ellipse_mask(e: Ellipse, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside the ellipse."""
    ca, sa = math.cos(e.rotation), math.sin(e.rotation)
    dx = xx - e.center_x
    dy = yy - e.center_y
    xr = (ca * dx + sa * dy) / e.semi_axis_a
    yr = (-sa * dx + ca * dy) / e.semi_axis_b
    return xr * xr + yr * yr <= 1.0


def rasterize(phantom: Phantom, grid_size: int, bin_index: int, spectral,
              materials: dict | None = None) -> ImageGrid:
    """Paint the phantom onto a grid_size^2 image of linear attenuation (cm^-1).

    Pixel value is density * kappa(material, bin) of the topmost ellipse whose
    interior covers the pixel centre; zero outside all ellipses.
    """
    if grid_size < 16:
        raise ConfigurationError("grid_size must be >= 16")
    spectral.check_bin(bin_index)
    if materials is None:
        materials = builtin_materials(spectral.bin_centers_kev)
    mu = ellipse_mu_values(phantom, bin_index, materials)

    pitch = phantom.field_of_view / grid_size
    c = pixel_centers(grid_size, pitch)
    xx, yy = np.meshgrid(c, c, indexing="xy")
    img = np.zeros((grid_size, grid_size))
    for e, value in zip(phantom.ellipses, mu):
        img[ellipse_mask(e, xx, yy)] = value
    return ImageGrid(img, pitch, UNITS_ATTENUATION, channel=f"bin{bin_index}")


def rasterize_density(phantom: Phantom, grid_size: int) -> ImageGrid:
    """Ground-truth density image (g/cm^3), same painting rules."""
    if grid_size < 16:
        raise ConfigurationError("grid_size must be >= 16")
    pitch = phantom.field_of_view / grid_size
    c = pixel_centers(grid_size, pitch)
    xx, yy = np.meshgrid(c, c, indexing="xy")
    img = np.zeros((grid_size, grid_size))
    for e in phantom.ellipses:
        img[ellipse_mask(e, xx, yy)] = e.density
    return ImageGrid(img, pitch, "g/cm^3", channel="density")


# ----------------------------------------------------------------------
# Closed-form line integrals
# ----------------------------------------------------------------------

def _ellipse_ray_interval(e: Ellipse, src: np.ndarray, direction: np.ndarray):
    """Entry/exit ray parameters for a bundle of rays against one ellipse.

    Rays are full lines src + t*direction (unit direction). Misses get the
    sentinel [_MISS, _MISS], which sorts past every real endpoint and spans
    zero length.
    """
    ca, sa = math.cos(e.rotation), math.sin(e.rotation)
    rx = (ca * (src[:, 0] - e.center_x) + sa * (src[:, 1] - e.center_y)) / e.semi_axis_a
    ry = (-sa * (src[:, 0] - e.center_x) + ca * (src[:, 1] - e.center_y)) / e.semi_axis_b
    dx = (ca * direction[:, 0] + sa * direction[:, 1]) / e.semi_axis_a
    dy = (-sa * direction[:, 0] + ca * direction[:, 1]) / e.semi_axis_b

    a = dx * dx + dy * dy
    b = 2.0 * (rx * dx + ry * dy)
    c = rx * rx + ry * ry - 1.0
    disc = b * b - 4.0 * a * c
    hit = disc > 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        t0 = np.where(hit, (-b - sq) / (2.0 * a), _MISS)
        t1 = np.where(hit, (-b + sq) / (2.0 * a), _MISS)
    return t0, t1


def visible_chords(phantom: Phantom, src: np.ndarray, direction: np.ndarray,
                   block: int = 32768) -> np.ndarray:
    """Per-ray, per-ellipse chord lengths of the *visible* part of each ellipse.

    Visible means not overwritten by a later ellipse along that ray, so
    sum_e chords[r, e] * mu_e is the exact line integral of the painted image.
    Shapes: src (R, 2), direction (R, 2) unit vectors -> (R, E).
    """
    src = np.atleast_2d(np.asarray(src, dtype=float))
    direction = np.atleast_2d(np.asarray(direction, dtype=float))
    n_rays = src.shape[0]
    n_ell = len(phantom.ellipses)
    chords = np.zeros((n_rays, n_ell))
    if n_ell == 0:
        return chords
    for start in range(0, n_rays, block):
        stop = min(start + block, n_rays)
        chords[start:stop] = _visible_chords_block(
            phantom, src[start:stop], direction[start:stop])
    return chords


def _visible_chords_block(phantom, src, direction):
    n_rays = src.shape[0]
    n_ell = len(phantom.ellipses)
    t0 = np.empty((n_rays, n_ell))
    t1 = np.empty((n_rays, n_ell))
    for j, e in enumerate(phantom.ellipses):
        t0[:, j], t1[:, j] = _ellipse_ray_interval(e, src, direction)

    # Elementary segments between sorted interval endpoints; each segment is
    # covered by a fixed set of ellipses, and the topmost (= last painted) one
    # owns it.
    endpoints = np.sort(np.concatenate([t0, t1], axis=1), axis=1)
    seg_len = np.diff(endpoints, axis=1)  # (R, 2E-1)
    mid = 0.5 * (endpoints[:, :-1] + endpoints[:, 1:])
    covered = (mid[:, :, None] >= t0[:, None, :]) & (mid[:, :, None] <= t1[:, None, :])
    any_cover = covered.any(axis=2)
    top = n_ell - 1 - np.argmax(covered[:, :, ::-1], axis=2)
    chords = np.empty((n_rays, n_ell))
    for j in range(n_ell):
        chords[:, j] = np.sum(seg_len * ((top == j) & any_cover), axis=1)
    return chords


def analytic_line_integral(phantom: Phantom, ray, bin_index: int, spectral,
                           materials: dict | None = None) -> float:
    """Exact line integral of the painted attenuation along one ray.

    ray = (source point (x, y) in cm, unit direction vector). A ray that
    misses every ellipse integrates to 0.
    """
    src, direction = (np.asarray(v, dtype=float) for v in ray)
    norm = math.hypot(*direction)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit-norm")
    spectral.check_bin(bin_index)
    if materials is None:
        materials = builtin_materials(spectral.bin_centers_kev)
    mu = ellipse_mu_values(phantom, bin_index, materials)
    chords = visible_chords(phantom, src[None, :], direction[None, :])
    return float(chords[0] @ mu)


# ----------------------------------------------------------------------
# Randomized phantom family
# ----------------------------------------------------------------------

def random_phantom(rng, field_of_view: float = 51.2,
                   insert_count_range=(3, 10),
                   insert_density_range=(0.2, 1.8),
                   insert_materials=("water", "bone", "soft_tissue")) -> Phantom:
    """Random body phantom: a water body ellipse plus a handful of inserts.

    Sized so the body also fits the default scanner's fan coverage
    (radius ~20 cm for the 512 x 0.1 cm detector at 142/180 cm).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    half = field_of_view / 2.0
    body_a = rng.uniform(0.45, 0.68) * half
    body_b = rng.uniform(0.45, 0.68) * half
    bcx = rng.uniform(-0.05, 0.05) * half
    bcy = rng.uniform(-0.05, 0.05) * half
    body = Ellipse(bcx, bcy, body_a, body_b, rng.uniform(0, math.pi),
                   "water", rng.uniform(0.95, 1.05))

    ellipses = [body]
    n_inserts = int(rng.integers(insert_count_range[0], insert_count_range[1] + 1))
    lo, hi = insert_density_range
    for _ in range(n_inserts):
        ia = rng.uniform(0.04, 0.22) * half
        ib = rng.uniform(0.04, 0.22) * half
        margin = min(body_a, body_b) - max(ia, ib) - 0.02 * half
        if margin <= 0:
            continue
        r = margin * math.sqrt(rng.uniform(0, 1))
        phi = rng.uniform(0, 2 * math.pi)
        ellipses.append(Ellipse(
            bcx + r * math.cos(phi), bcy + r * math.sin(phi), ia, ib,
            rng.uniform(0, math.pi),
            str(rng.choice(insert_materials)),
            rng.uniform(lo, hi),
        ))
    return Phantom(ellipses, field_of_view)


# ----------------------------------------------------------------------
# Phantom description files
# ----------------------------------------------------------------------

def phantom_to_dict(phantom: Phantom) -> dict:
    return {
        "field_of_view": phantom.field_of_view,
        "ellipses": [
            {
                "center_x": e.center_x, "center_y": e.center_y,
                "semi_axis_a": e.semi_axis_a, "semi_axis_b": e.semi_axis_b,
                "rotation": e.rotation, "material": e.material, "density": e.density,
            }
            for e in phantom.ellipses
        ],
    }


def phantom_from_dict(d: dict) -> Phantom:
    try:
        ellipses = [Ellipse(**e) for e in d["ellipses"]]
        return Phantom(ellipses, float(d["field_of_view"]))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad phantom description: {exc}") from exc


def save_phantom(phantom: Phantom, path) -> None:
    Path(path).write_text(json.dumps(phantom_to_dict(phantom), sort_keys=True, indent=1) + "\n")


def load_phantom(path) -> Phantom:
    try:
        return phantom_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read phantom file {path}: {exc}") from exc
