"""Per-pixel polarization physics for four-angle polarizer stacks.

A division-of-focal-plane polarization camera delivers four co-registered
images behind linear polarizers at 0, 45, 90 and 135 degrees.  Across those
angles each pixel follows a cosine irradiance model

    I(theta) = I_c + I_sv * cos(2*theta - 2*phi)

with a constant part ``I_c`` (diffuse plus unpolarized specular), a modulation
amplitude ``I_sv`` and a phase angle ``phi`` defined modulo pi.  This module
fits that model, derives the polarization chromaticity image used for
candidate matching, and normalizes illumination color.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Polarizer orientations of the four sub-images, in acquisition order.
ANGLES_DEG = (0.0, 45.0, 90.0, 135.0)
ANGLES_RAD = np.deg2rad(np.asarray(ANGLES_DEG))

_EPS = 1e-12


@dataclass(frozen=True)
class PolarStack:
    """Four co-registered RGB images at polarizer angles 0/45/90/135 degrees.

    ``images`` has shape (4, H, W, 3), linear intensities, finite and >= 0.
    """

    images: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.images, dtype=np.float64)
        if img.ndim != 4 or img.shape[0] != 4 or img.shape[3] != 3:
            raise ValueError(f"expected shape (4, H, W, 3), got {img.shape}")
        if not np.all(np.isfinite(img)):
            raise ValueError("polarization stack contains non-finite values")
        if np.any(img < 0):
            raise ValueError("polarization stack contains negative intensities")
        object.__setattr__(self, "images", img)

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def mean_image(self) -> np.ndarray:
        """Per-pixel mean over the four polarizer angles, shape (H, W, 3)."""
        return self.images.mean(axis=0)


@dataclass(frozen=True)
class PolarDecomposition:
    """Per-pixel cosine-model fields fitted from a :class:`PolarStack`.

    All fields have shape (H, W, 3).  ``phi`` is in radians, reduced to
    [0, pi).  ``residual`` is the per-pixel L2 misfit of the four-angle
    least-squares fit (zero for any stack synthesized from the model).
    """

    i_c: np.ndarray
    i_sv: np.ndarray
    phi: np.ndarray
    residual: np.ndarray


@dataclass(frozen=True)
class ChromaticityImage:
    """Polarization chromaticity image and its raw components.

    ``chro`` is the 3-channel chromaticity in [0, 1]; ``i_raw_d`` and
    ``i_raw_s`` are the approximate diffuse and specular components;
    ``i_min_bar`` is the global dark-pixel stabilizer in the denominator.
    """

    chro: np.ndarray
    i_raw_d: np.ndarray
    i_raw_s: np.ndarray
    i_min_bar: float


@dataclass(frozen=True)
class IlluminationGamma:
    """Estimated illumination chromaticity (sums to 1) plus degeneracy flags."""

    values: np.ndarray
    degenerate: np.ndarray


def reduce_phase(phi_raw):
    """Reduce a phase angle (radians) into [0, pi), modulo pi."""
    out = np.mod(phi_raw, np.pi)
    # np.mod can land exactly on pi for inputs just below a multiple of pi
    return np.where(out >= np.pi, 0.0, out)


def evaluate_cosine_model(i_c, i_sv, phi, angles=ANGLES_RAD):
    """Forward-evaluate ``I_c + I_sv*cos(2*theta - 2*phi)`` at each angle.

    Returns an array with a leading axis over ``angles``.
    """
    i_c = np.asarray(i_c, dtype=np.float64)
    i_sv = np.asarray(i_sv, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    ang = np.asarray(angles, dtype=np.float64)
    ang = ang.reshape((-1,) + (1,) * i_c.ndim)
    return i_c + i_sv * np.cos(2.0 * ang - 2.0 * phi)


def fit_cosine_model(stack: PolarStack) -> PolarDecomposition:
    """Least-squares fit of the cosine irradiance model per pixel and channel.

    With the four canonical angles the design is orthogonal, so the solution
    is closed form: I_c is the mean over angles, and the quadrature pair
    (a, b) = ((I0 - I90)/2, (I45 - I135)/2) gives I_sv = hypot(a, b) and
    phi = atan2(b, a)/2 reduced modulo pi.  A flat pixel (no modulation)
    yields I_sv = 0 and phi = 0 by convention.
    """
    i0, i45, i90, i135 = stack.images
    i_c = stack.images.mean(axis=0)
    a = 0.5 * (i0 - i90)
    b = 0.5 * (i45 - i135)
    i_sv = np.hypot(a, b)
    phi = reduce_phase(0.5 * np.arctan2(b, a))
    recon = evaluate_cosine_model(i_c, i_sv, phi)
    residual = np.sqrt(np.sum((stack.images - recon) ** 2, axis=0))
    return PolarDecomposition(i_c=np.maximum(i_c, 0.0), i_sv=i_sv, phi=phi,
                              residual=residual)


def chromaticity(decomp: PolarDecomposition) -> ChromaticityImage:
    """Polarization chromaticity image from a fitted decomposition.

    The approximate specular component is ``2*I_sv`` and the approximate
    diffuse component is ``I_c - 2*I_sv`` (floored at zero: a negative
    diffuse estimate is unphysical).  Each channel is divided by the channel
    sum plus a global stabilizer, the mean over pixels of the minimum channel
    of the mean image.  The mean image over the four angles equals I_c, so
    the stabilizer is computed from I_c directly.
    """
    i_raw_s = 2.0 * decomp.i_sv
    i_raw_d = np.maximum(decomp.i_c - i_raw_s, 0.0)
    i_min_bar = float(np.mean(np.min(decomp.i_c, axis=-1)))
    denom = np.sum(i_raw_d, axis=-1, keepdims=True) + i_min_bar
    with np.errstate(invalid="ignore", divide="ignore"):
        chro = np.where(denom > 0.0, i_raw_d / np.where(denom > 0, denom, 1.0),
                        1.0 / 3.0)
    return ChromaticityImage(chro=chro, i_raw_d=i_raw_d, i_raw_s=i_raw_s,
                             i_min_bar=i_min_bar)


def apply_gamma(stack: PolarStack, gamma) -> PolarStack:
    """Divide every channel of every image by ``3 * gamma`` per channel."""
    gamma = np.asarray(gamma, dtype=np.float64)
    return PolarStack(stack.images / (3.0 * gamma))


def estimate_gamma(stack: PolarStack, top_fraction: float = 0.01,
                   eps: float = 1e-8) -> IlluminationGamma:
    """White-patch illumination chromaticity from the brightest pixels.

    Averages the mean image over its top ``top_fraction`` brightest pixels
    (by channel sum) and normalizes to sum 1.  Components <= ``eps`` are
    degenerate: they are replaced by 1/3 and flagged.
    """
    mean_img = stack.mean_image()
    brightness = mean_img.sum(axis=-1).ravel()
    n = max(1, int(round(top_fraction * brightness.size)))
    order = np.argsort(brightness, kind="stable")
    top = mean_img.reshape(-1, 3)[order[-n:]]
    raw = top.mean(axis=0)
    total = raw.sum()
    if total <= eps:
        return IlluminationGamma(values=np.full(3, 1.0 / 3.0),
                                 degenerate=np.ones(3, dtype=bool))
    gamma = raw / total
    degenerate = gamma <= eps
    if np.any(degenerate):
        gamma = np.where(degenerate, 1.0 / 3.0, gamma)
        gamma = gamma / gamma.sum()
    return IlluminationGamma(values=gamma, degenerate=degenerate)


def normalize_illumination(stack: PolarStack, gamma=None,
                           top_fraction: float = 0.01):
    """Normalize the stack to pure white illumination.

    Estimates the illumination chromaticity (unless ``gamma`` is given) and
    divides the stack by ``3 * gamma`` so an ideal white highlight ends up
    with equal channel contributions of 1/3.

    Returns (normalized stack, :class:`IlluminationGamma`).
    """
    if gamma is None:
        gamma = estimate_gamma(stack, top_fraction=top_fraction)
    elif not isinstance(gamma, IlluminationGamma):
        gamma = IlluminationGamma(values=np.asarray(gamma, dtype=np.float64),
                                  degenerate=np.zeros(3, dtype=bool))
    return apply_gamma(stack, gamma.values), gamma
