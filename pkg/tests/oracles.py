"""Brute-force reference implementations the fast paths are checked against."""

import math

import numpy as np


def brute_rasterize(phantom, grid_size, mu_values):
    """Per-pixel scan, last ellipse wins; mu_values aligned with the ellipse list."""
    pitch = phantom.field_of_view / grid_size
    img = np.zeros((grid_size, grid_size))
    for iy in range(grid_size):
        y = (iy - (grid_size - 1) / 2.0) * pitch
        for ix in range(grid_size):
            x = (ix - (grid_size - 1) / 2.0) * pitch
            value = 0.0
            for e, mu in zip(phantom.ellipses, mu_values):
                ca, sa = math.cos(e.rotation), math.sin(e.rotation)
                dx, dy = x - e.center_x, y - e.center_y
                xr = (ca * dx + sa * dy) / e.semi_axis_a
                yr = (-sa * dx + ca * dy) / e.semi_axis_b
                if xr * xr + yr * yr <= 1.0:
                    value = mu
            img[iy, ix] = value
    return img


def mse_loop(x, y):
    m, n = x.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            d = x[i, j] - y[i, j]
            total += d * d
    return total / (m * n)


def ssim_loop(x, y, dynamic_range, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct sliding-window SSIM with Gaussian weights, no convolution tricks."""
    r = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    w = w / w.sum()
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    rows = x.shape[0] - window + 1
    cols = x.shape[1] - window + 1
    vals = []
    for i in range(rows):
        for j in range(cols):
            px = x[i:i + window, j:j + window]
            py = y[i:i + window, j:j + window]
            mx = (w * px).sum()
            my = (w * py).sum()
            vx = (w * px * px).sum() - mx * mx
            vy = (w * py * py).sum() - my * my
            cov = (w * px * py).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))
