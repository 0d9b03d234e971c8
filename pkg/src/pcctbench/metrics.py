"""Image quality metrics: MSE, RMSE, SSIM and ROI extraction."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d


def _as_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    """Mean squared error (1/(m*n)) * sum |x(i,j) - y(i,j)|^2."""
    x, y = _as_pair(x, y)
    d = x - y
    return float(np.mean(d * d))


def rmse(x, y) -> float:
    return float(np.sqrt(mse(x, y)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    if size < 1 or size % 2 == 0:
        raise ValueError("window size must be odd and positive")
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(x, y, dynamic_range: float, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM over all fully-contained (valid) windows.

    Gaussian-weighted local statistics, standard constants C1 = (k1*L)^2,
    C2 = (k2*L)^2 with L = dynamic_range.
    """
    x, y = _as_pair(x, y)
    if dynamic_range <= 0:
        raise ValueError("dynamic_range must be > 0")
    if window > min(x.shape):
        raise ValueError(f"window {window} larger than image {x.shape}")
    w = gaussian_window(window, sigma)

    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    xx = convolve2d(x * x, w, mode="valid")
    yy = convolve2d(y * y, w, mode="valid")
    xy = convolve2d(x * y, w, mode="valid")
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y

    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def roi(img, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Copy of the window at column x0, row y0, size w x h; must be in bounds."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("roi expects a 2-D image")
    rows, cols = img.shape
    if w <= 0 or h <= 0:
        raise ValueError("roi size must be positive")
    if x0 < 0 or y0 < 0 or x0 + w > cols or y0 + h > rows:
        raise ValueError(f"roi ({x0},{y0},{w},{h}) outside {cols}x{rows} image")
    return img[y0:y0 + h, x0:x0 + w].copy()
