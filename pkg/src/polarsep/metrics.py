"""PSNR and SSIM against ground truth images."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

PSNR_CAP_DB = 99.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


@dataclass
class MetricReport:
    """Quality scores for one (result, ground truth) pair."""

    psnr: float
    ssim: float
    ssim_map: np.ndarray
    psnr_masked: float | None = None
    ssim_masked: float | None = None

    def to_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim,
                "psnr_masked": self.psnr_masked,
                "ssim_masked": self.ssim_masked}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0, cap: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB over all channels.

    Identical images (MSE = 0) report the cap value.
    """
    a, b = _check_pair(a, b)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * np.log10(peak ** 2 / mse))


def luminance(img) -> np.ndarray:
    """Rec.601 luminance of an RGB image; grayscale passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA_WEIGHTS
    return img


def _gaussian_window():
    half = _SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, data_range: float = 1.0, per_channel: bool = False):
    """Structural similarity: mean score and the local score map.

    Wang et al. formulation: 11x11 Gaussian window with sigma 1.5,
    K1 = 0.01, K2 = 0.03.  RGB inputs are compared on luminance unless
    ``per_channel`` is set, which averages per-channel scores.
    """
    a, b = _check_pair(a, b)
    if per_channel and a.ndim == 3:
        results = [ssim(a[..., c], b[..., c], data_range) for c in range(a.shape[-1])]
        maps = np.stack([m for _, m in results], axis=-1)
        return float(np.mean([s for s, _ in results])), maps
    x = luminance(a)
    y = luminance(b)
    if min(x.shape) < _SSIM_WINDOW:
        raise ValueError(f"image smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} "
                         "SSIM window")
    w = _gaussian_window()
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2

    mu_x = fftconvolve(x, w, mode="valid")
    mu_y = fftconvolve(y, w, mode="valid")
    xx = fftconvolve(x * x, w, mode="valid") - mu_x ** 2
    yy = fftconvolve(y * y, w, mode="valid") - mu_y ** 2
    xy = fftconvolve(x * y, w, mode="valid") - mu_x * mu_y

    score_map = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) \
        / ((mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2))
    return float(score_map.mean()), score_map


def compare(a, b, mask=None, peak: float = 1.0) -> MetricReport:
    """Full metric report; ``mask`` selects pixels for the masked variants
    (e.g. the unsaturated region of a synthetic scene)."""
    score, score_map = ssim(a, b, data_range=peak)
    report = MetricReport(psnr=psnr(a, b, peak=peak), ssim=score,
                          ssim_map=score_map)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a_arr, b_arr = _check_pair(a, b)
        if mask.shape != a_arr.shape[:2]:
            raise ValueError("mask shape does not match image")
        if mask.any():
            diff2 = (a_arr - b_arr) ** 2
            mse = float(diff2[mask].mean())
            report.psnr_masked = PSNR_CAP_DB if mse == 0.0 else \
                min(PSNR_CAP_DB, 10.0 * np.log10(peak ** 2 / mse))
            # only windows lying entirely inside the mask count
            from scipy.ndimage import minimum_filter
            half = _SSIM_WINDOW // 2
            eroded = minimum_filter(mask.astype(np.uint8), _SSIM_WINDOW,
                                    mode="constant") > 0
            inner = eroded[half:-half, half:-half]
            if inner.any():
                report.ssim_masked = float(score_map[inner].mean())
    return report
