"""Edge extraction and the perturbation-vs-edge cosine check.

Pipeline: Gaussian blur, Sobel gradients, non-maximum suppression along
the quantized gradient direction, double threshold, hysteresis keeping
weak edges connected to strong ones.  The cosine compares |r| against
each image's binary edge map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import DomainError


@dataclass
class CannyParams:
    sigma: float = 1.0
    low_ratio: float = 0.1    # of the max gradient magnitude after suppression
    high_ratio: float = 0.3

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not (0 < self.low_ratio <= self.high_ratio <= 1):
            raise ValueError(
                f"need 0 < low <= high <= 1, got ({self.low_ratio}, {self.high_ratio})"
            )


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """(H, W) or (H, W, C) -> (H, W); RGB uses Rec.601 luminance."""
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.shape[-1] == 1:
        return image[..., 0].astype(np.float64)
    if image.shape[-1] == 3:
        w = np.array([0.299, 0.587, 0.114])
        return image.astype(np.float64) @ w
    return image.astype(np.float64).mean(axis=-1)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(round(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with reflect padding."""
    k = _gaussian_kernel(sigma)
    radius = len(k) // 2
    out = image.astype(np.float64)
    for axis in (0, 1):
        padded = np.pad(out, [(radius, radius) if a == axis else (0, 0) for a in (0, 1)],
                        mode="reflect")
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out


def sobel_gradients(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(image, 1, mode="reflect")
    gx = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    p = np.pad(mag, 1, mode="constant")
    center = p[1:-1, 1:-1]
    neighbors = {
        0: (p[1:-1, 2:], p[1:-1, :-2]),    # east-west
        45: (p[:-2, 2:], p[2:, :-2]),      # ne-sw
        90: (p[:-2, 1:-1], p[2:, 1:-1]),   # north-south
        135: (p[:-2, :-2], p[2:, 2:]),     # nw-se
    }
    out = np.zeros_like(mag)
    bins = np.full(angle.shape, 0)
    bins[(angle >= 22.5) & (angle < 67.5)] = 45
    bins[(angle >= 67.5) & (angle < 112.5)] = 90
    bins[(angle >= 112.5) & (angle < 157.5)] = 135
    for direction, (n1, n2) in neighbors.items():
        mask = (bins == direction) & (center >= n1) & (center >= n2)
        out[mask] = mag[mask]
    return out


def canny_edges(image: np.ndarray, params: CannyParams | None = None) -> np.ndarray:
    """Binary edge map of a single (H, W) or (H, W, C) image."""
    params = params or CannyParams()
    gray = to_grayscale(np.asarray(image))
    blurred = gaussian_blur(gray, params.sigma)
    gx, gy = sobel_gradients(blurred)
    mag = np.hypot(gx, gy)
    nms = _nonmax_suppress(mag, gx, gy)
    peak = nms.max()
    if peak <= 0:
        return np.zeros(gray.shape, dtype=bool)
    strong = nms >= params.high_ratio * peak
    weak = nms >= params.low_ratio * peak
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros(gray.shape, dtype=bool)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two flattened vectors; 0.0 when either is all-zero."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def _abs_perturbation_map(r: np.ndarray) -> np.ndarray:
    r = np.abs(np.asarray(r, dtype=np.float64))
    if r.ndim == 3:
        return r.mean(axis=-1)
    return r


def edge_cosine_profile(r: np.ndarray, images: np.ndarray,
                        params: CannyParams | None = None) -> tuple[float, int, int]:
    """Mean cosine of |r| against each image's edge map.

    Returns (mean, n_used, n_skipped); images with empty edge maps (e.g.
    all-black) are skipped and counted.
    """
    rmap = _abs_perturbation_map(r)
    cosines = []
    skipped = 0
    for img in images:
        edges = canny_edges(img, params)
        if not edges.any():
            skipped += 1
            continue
        cosines.append(cosine_similarity(rmap, edges.astype(np.float64)))
    if not cosines:
        raise DomainError("no image produced a nonempty edge map")
    return float(np.mean(cosines)), len(cosines), skipped


def edge_cosine_similarity(r: np.ndarray, images: np.ndarray,
                           params: CannyParams | None = None) -> float:
    """Scalar form of edge_cosine_profile."""
    mean, _, _ = edge_cosine_profile(r, images, params)
    return mean
