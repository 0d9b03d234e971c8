"""Energy-bin bookkeeping and photon-count simulation.

Counts are Poisson with per-ray expectation n0_total * w_k * exp(-p); draws
are keyed by an explicit integer tuple through a counter-based Philox stream,
so results do not depend on worker count or iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pcctbench.errors import ConfigurationError
from pcctbench.projector import FanBeamGeometry, Sinogram

DEFAULT_BINS = ((30.0, 45.0), (45.0, 60.0), (60.0, 80.0), (80.0, 100.0))
# Declared stand-in for the tube's normalized spectrum; configurable.
DEFAULT_WEIGHTS = (0.28, 0.27, 0.25, 0.20)

SUM_CHANNEL = "sum"


@dataclass(frozen=True)
class SpectralModel:
    """Energy bins, spectrum weights, flux, and conversion coefficients.

    kappa_ref holds the per-bin mass attenuation coefficient (cm^2/g) used by
    the density conversions; kappa_sum is the flux-weighted coefficient for
    the channel-sum image.
    """

    bins: tuple = DEFAULT_BINS
    weights: tuple = DEFAULT_WEIGHTS
    n0_total: float = 1.0e5
    kappa_ref: tuple | None = None
    kappa_sum: float | None = None

    def __post_init__(self):
        bins = tuple((float(lo), float(hi)) for lo, hi in self.bins)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(bins) == 0:
            raise ConfigurationError("need at least one energy bin")
        for lo, hi in bins:
            if not lo < hi:
                raise ConfigurationError(f"bin ({lo}, {hi}) is not increasing")
        for (_, hi), (lo2, _) in zip(bins, bins[1:]):
            if abs(hi - lo2) > 1e-9:
                raise ConfigurationError("energy bins must be contiguous")
        if len(self.weights) != len(bins):
            raise ConfigurationError("one weight per bin required")
        if any(w < 0 for w in self.weights):
            raise ConfigurationError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ConfigurationError("spectrum weights must sum to 1")
        if not self.n0_total > 0:
            raise ConfigurationError("n0_total must be positive")
        if self.kappa_ref is not None:
            object.__setattr__(self, "kappa_ref", tuple(float(k) for k in self.kappa_ref))
            if len(self.kappa_ref) != len(bins):
                raise ConfigurationError("kappa_ref must have one entry per bin")
            if any(k <= 0 for k in self.kappa_ref):
                raise ConfigurationError("kappa_ref entries must be > 0")
        if self.kappa_sum is not None and not self.kappa_sum > 0:
            raise ConfigurationError("kappa_sum must be > 0")

    @property
    def num_bins(self) -> int:
        return len(self.bins)

    @property
    def bin_centers_kev(self) -> tuple:
        return tuple((lo + hi) / 2.0 for lo, hi in self.bins)

    def check_bin(self, bin_index: int) -> None:
        if not 0 <= bin_index < self.num_bins:
            raise ConfigurationError(
                f"bin index {bin_index} out of range for {self.num_bins} bins"
            )

    def kappa_for_channel(self, channel) -> float:
        """Conversion coefficient for a bin index or the 'sum' channel."""
        if channel == SUM_CHANNEL:
            if self.kappa_sum is None:
                raise ConfigurationError("spectral model has no kappa_sum")
            return self.kappa_sum
        self.check_bin(int(channel))
        if self.kappa_ref is None:
            raise ConfigurationError("spectral model has no kappa_ref table")
        return self.kappa_ref[int(channel)]

    def to_dict(self) -> dict:
        return {
            "bins": [list(b) for b in self.bins],
            "weights": list(self.weights),
            "n0_total": self.n0_total,
            "kappa_ref": list(self.kappa_ref) if self.kappa_ref is not None else None,
            "kappa_sum": self.kappa_sum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralModel":
        return cls(
            bins=tuple(tuple(b) for b in d.get("bins", DEFAULT_BINS)),
            weights=tuple(d.get("weights", DEFAULT_WEIGHTS)),
            n0_total=float(d.get("n0_total", 1.0e5)),
            kappa_ref=tuple(d["kappa_ref"]) if d.get("kappa_ref") else None,
            kappa_sum=d.get("kappa_sum"),
        )


@dataclass
class CountsFrame:
    """Photon counts for one channel of one acquisition."""

    counts: np.ndarray  # (num_views, num_detectors), non-negative ints
    seed: tuple  # RNG key used for the draw (empty for noiseless)
    channel: object  # bin index or "sum"
    geometry: FanBeamGeometry | None = None
    noiseless_lambda: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a views x detectors array")
        if self.counts.size and self.counts.min() < 0:
            raise ValueError("counts must be non-negative")


def expected_counts(sino_k: Sinogram, model: SpectralModel, k: int) -> np.ndarray:
    """Per-ray Poisson expectation lambda = n0_total * w_k * exp(-p)."""
    model.check_bin(k)
    p = sino_k.data
    if not np.all(np.isfinite(p)):
        raise ValueError("sinogram contains non-finite values")
    return model.n0_total * model.weights[k] * np.exp(-p)


def draw_counts(lam: np.ndarray, seed, noiseless: bool = False,
                channel=None, geometry=None) -> CountsFrame:
    """Poisson draw (or rounded expectation when noiseless) from a keyed stream.

    seed may be an int or a tuple of ints; the same key always reproduces the
    same frame.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size and lam.min() < 0:
        raise ValueError("lambda must be >= 0")
    key = tuple(int(s) for s in np.atleast_1d(seed))
    if noiseless:
        counts = np.rint(lam).astype(np.int64)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
        counts = rng.poisson(lam).astype(np.int64)
    return CountsFrame(counts, key, channel, geometry, noiseless_lambda=lam)


def counts_to_projection(frame: CountsFrame, model: SpectralModel, k) -> Sinogram:
    """Log transform back to line integrals: p = -ln(max(counts, 1) / flux).

    k is the frame's bin index, or "sum" for a channel-sum frame (effective
    flux n0_total). Zero counts are clamped to one count to keep p finite.
    """
    if k == SUM_CHANNEL:
        flux = model.n0_total
        tag = SUM_CHANNEL
    else:
        model.check_bin(k)
        if model.weights[k] == 0:
            raise ConfigurationError(f"bin {k} has zero spectrum weight")
        flux = model.n0_total * model.weights[k]
        tag = f"bin{k}"
    counts = np.maximum(frame.counts.astype(np.float64), 1.0)
    p = -np.log(counts / flux)
    if frame.geometry is None:
        raise ValueError("counts frame has no geometry attached")
    return Sinogram(p, frame.geometry, channel=tag)


def noiseless_sum_projection(sinos, model: SpectralModel) -> Sinogram:
    """Channel-sum line integrals from noise-free per-bin sinograms:
    p_sum = -ln(sum_k w_k exp(-p_k))."""
    sinos = list(sinos)
    if len(sinos) != model.num_bins:
        raise ValueError(f"expected {model.num_bins} sinograms, got {len(sinos)}")
    total = np.zeros_like(sinos[0].data)
    for w, s in zip(model.weights, sinos):
        if s.data.shape != sinos[0].data.shape:
            raise ValueError("mismatched sinogram shapes")
        total += w * np.exp(-s.data)
    return Sinogram(-np.log(total), sinos[0].geometry, channel=SUM_CHANNEL)


def channel_sum_counts(frames) -> CountsFrame:
    """Sum per-bin counts into a channel-sum frame (all bins required)."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to sum")
    shape = frames[0].counts.shape
    bins_seen = set()
    for f in frames:
        if f.counts.shape != shape:
            raise ValueError("mismatched counts shapes across bins")
        bins_seen.add(f.channel)
    if len(bins_seen) != len(frames):
        raise ValueError("duplicate bins in channel sum")
    total = np.zeros(shape, dtype=np.int64)
    for f in frames:
        total += f.counts.astype(np.int64)
    seeds = tuple(s for f in frames for s in f.seed)
    return CountsFrame(total, seeds, SUM_CHANNEL, frames[0].geometry)
