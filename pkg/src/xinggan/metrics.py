"""SSIM, Mask-SSIM, skeleton masks, marker-based joint detection and PCKh."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .synth import LIMBS, MARKER_COLORS, N_JOINTS, Skeleton, limb_mask

SSIM_WIN = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
DETECT_TOL = 0.15
PCKH_ALPHA = 0.5

CSV_HEADER = "step,ssim,mask_ssim,pckh,l1,n_samples"


def _to_unit(img: np.ndarray) -> np.ndarray:
    """[-1, 1] image -> float64 in [0, 1], channel-first."""
    x = (np.asarray(img, dtype=np.float64) + 1.0) * 0.5
    return x[None] if x.ndim == 2 else x


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' Gaussian filtering over the last two axes
    k = len(g)
    x = sliding_window_view(x, k, axis=-1) @ g
    x = sliding_window_view(x, k, axis=-2) @ g
    return x


def ssim_unit(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """SSIM of two [C, H, W] images already scaled to [0, data_range]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[-1] < SSIM_WIN or a.shape[-2] < SSIM_WIN:
        raise ValueError(f"image {a.shape[-2:]} smaller than the {SSIM_WIN}x{SSIM_WIN} SSIM window")
    g = gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2))
    return float(smap.mean(axis=(-2, -1)).mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM (11x11 Gaussian, sigma 1.5, L = 1) of two [-1, 1] images."""
    return ssim_unit(_to_unit(a), _to_unit(b))


def mask_ssim(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """SSIM after zeroing (black in [0, 1]) every pixel outside ``mask``."""
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        raise ValueError("mask_ssim: empty mask (degenerate sample)")
    return ssim_unit(_to_unit(a) * mask, _to_unit(b) * mask)


def pose_mask(sk: Skeleton, radius: int = 3, height: int = 64, width: int = 32, limbs=LIMBS) -> np.ndarray:
    """Rendered limb pixels dilated by a disk of ``radius`` px; {0, 1} uint8."""
    if radius < 1:
        raise ValueError(f"dilation radius must be >= 1, got {radius}")
    base = limb_mask(sk, height, width, limbs)
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disk = xx ** 2 + yy ** 2 <= radius ** 2
    return ndimage.binary_dilation(base, structure=disk).astype(np.uint8)


def detect_joints(img: np.ndarray, tol: float = DETECT_TOL) -> list[tuple[float, float] | None]:
    """Per joint, centroid (x, y) of pixels within ``tol`` (RGB distance in
    [0, 1] units) of that joint's marker color; None if no pixel matches."""
    rgb = _to_unit(img).transpose(1, 2, 0)
    out: list[tuple[float, float] | None] = []
    for j in range(N_JOINTS):
        hit = np.linalg.norm(rgb - MARKER_COLORS[j], axis=-1) <= tol
        ys, xs = np.nonzero(hit)
        out.append((float(xs.mean()), float(ys.mean())) if len(xs) else None)
    return out


def pckh(pred, gt: Skeleton, alpha: float = PCKH_ALPHA) -> float | None:
    """Fraction of joints within ``alpha`` x head-segment length of ground
    truth. Missing predictions are misses. None if the head segment is
    shorter than 1 px (sample should be skipped)."""
    head = gt.head_length()
    if head < 1.0:
        return None
    thr = alpha * head
    hits = 0
    for p, g in zip(pred, gt.joints):
        if p is not None and np.hypot(p[0] - g[0], p[1] - g[1]) <= thr:
            hits += 1
    return hits / len(gt.joints)


@dataclass
class EvalReport:
    ssim: float
    mask_ssim: float
    pckh: float
    l1: float
    n_samples: int
    n_skipped: int = 0

    def csv_row(self, step: int) -> str:
        return f"{step},{self.ssim:.6f},{self.mask_ssim:.6f},{self.pckh:.6f},{self.l1:.6f},{self.n_samples}"

    @classmethod
    def from_csv_row(cls, row: str) -> tuple[int, "EvalReport"]:
        fields = row.strip().split(",")
        if len(fields) != 6:
            raise ValueError(f"expected 6 CSV fields, got {len(fields)}: {row!r}")
        step, s, ms, pk, l1, n = fields
        return int(step), cls(float(s), float(ms), float(pk), float(l1), int(n))
