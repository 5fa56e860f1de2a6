"""Synthetic polarization scenes with exact ground truth.

Depth maps are shaded with the Blinn-Phong model; the specular lobe is
partially polarized, producing four polarizer-angle images that satisfy the
cosine irradiance model exactly.  Conventions: the constant part is
``diffuse + (1 - p/2) * specular`` and the modulation amplitude is
``(p/2) * specular``, so the mean over the four angles equals
``diffuse_gt + specular_gt`` with ``specular_gt = (1 - p/2) * specular``
and the k_s = 0 image is exactly the diffuse ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .polar_model import ANGLES_RAD, PolarStack, reduce_phase

PHASE_FROM_GEOMETRY = "from-geometry"
PHASE_CONSTANT = "constant"


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a synthetic polarization scene."""

    depth: np.ndarray
    albedo: np.ndarray          # (3,) uniform color or (H, W, 3) texture
    light_dir: np.ndarray       # unit vector toward the light
    light_color: np.ndarray = field(default_factory=lambda: np.ones(3))
    shininess: float = 40.0
    k_d: float = 0.8
    k_s: float = 0.3
    polarization_fraction: float = 0.8
    phase_mode: str = PHASE_FROM_GEOMETRY
    phi0: float = 0.0
    name: str = "scene"

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        if not np.all(np.isfinite(depth)):
            raise ValueError("depth map contains non-finite values")
        light = np.asarray(self.light_dir, dtype=np.float64)
        light = light / np.linalg.norm(light)
        if not 0.0 <= self.polarization_fraction <= 1.0:
            raise ValueError("polarization_fraction must be in [0, 1]")
        if self.phase_mode not in (PHASE_FROM_GEOMETRY, PHASE_CONSTANT):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "albedo", np.asarray(self.albedo, dtype=np.float64))
        object.__setattr__(self, "light_dir", light)
        object.__setattr__(self, "light_color",
                           np.asarray(self.light_color, dtype=np.float64))


@dataclass(frozen=True)
class GroundTruthScene:
    """Rendered polarization stack with its exact separation."""

    stack: PolarStack
    diffuse_gt: np.ndarray
    specular_gt: np.ndarray
    saturation: np.ndarray      # (H, W) bool, True where any angle clipped
    spec: SceneSpec


def normals_from_depth(depth: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Surface normals from a depth map, ``normalize(-dz/dx, -dz/dy, 1)``.

    Gradients are central differences, one-sided at the borders; ``spacing``
    is the pixel pitch in depth units.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if min(depth.shape) < 2:
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]),
                               depth.shape + (3,)).copy()
    dzdy, dzdx = np.gradient(depth, spacing)
    n = np.stack([-dzdx, -dzdy, np.ones_like(depth)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def render(spec: SceneSpec) -> GroundTruthScene:
    """Render the four polarizer-angle images and their ground truth."""
    normals = normals_from_depth(spec.depth)
    light = spec.light_dir
    view = np.array([0.0, 0.0, 1.0])
    half = light + view
    half = half / np.linalg.norm(half)

    ndotl = np.clip(normals @ light, 0.0, None)
    ndoth = np.clip(normals @ half, 0.0, None)
    lit = ndotl > 0.0

    albedo = spec.albedo
    if albedo.ndim == 1:
        albedo = np.broadcast_to(albedo, spec.depth.shape + (3,))
    diffuse = spec.k_d * albedo * spec.light_color * ndotl[..., None]
    specular = spec.k_s * spec.light_color \
        * np.where(lit, ndoth ** spec.shininess, 0.0)[..., None]

    if spec.phase_mode == PHASE_FROM_GEOMETRY:
        phi = reduce_phase(np.arctan2(normals[..., 1], normals[..., 0]))
    else:
        phi = np.full(spec.depth.shape, reduce_phase(spec.phi0))

    p = spec.polarization_fraction
    i_c = diffuse + (1.0 - p / 2.0) * specular
    i_sv = (p / 2.0) * specular
    angles = ANGLES_RAD.reshape(4, 1, 1, 1)
    raw = i_c[None] + i_sv[None] * np.cos(2.0 * angles - 2.0 * phi[None, ..., None])
    saturation = np.any(raw > 1.0, axis=(0, 3))
    images = np.clip(raw, 0.0, 1.0)
    return GroundTruthScene(stack=PolarStack(images),
                            diffuse_gt=np.clip(diffuse, 0.0, 1.0),
                            specular_gt=(1.0 - p / 2.0) * specular,
                            saturation=saturation, spec=spec)


def hemisphere_depth(size: int, radius: float = 0.85) -> np.ndarray:
    """Hemisphere bump on a flat plane, height in pixel units."""
    x = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(x, x)
    r2 = xx ** 2 + yy ** 2
    z = np.zeros((size, size))
    inside = r2 < radius ** 2
    z[inside] = np.sqrt(radius ** 2 - r2[inside])
    return z * (size / 2.0)


def blobs_depth(size: int) -> np.ndarray:
    """Two blended Gaussian blobs, height in pixel units."""
    x = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(x, x)
    z = 0.7 * np.exp(-(((xx + 0.35) ** 2 + (yy + 0.2) ** 2) / 0.18))
    z += 0.5 * np.exp(-(((xx - 0.4) ** 2 + (yy - 0.3) ** 2) / 0.10))
    return z * (size / 2.0)


def checker_albedo(size: int, period: int = 32,
                   color_a=(0.65, 0.30, 0.20),
                   color_b=(0.25, 0.45, 0.65)) -> np.ndarray:
    """Two-color checkerboard albedo texture."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = ((yy // period + xx // period) % 2).astype(bool)
    out = np.empty((size, size, 3))
    out[~mask] = color_a
    out[mask] = color_b
    return out


def scene_suite(size: int = 128) -> list:
    """Deterministic graded suite from weak specular to saturated highlights.

    Specular strength and saturated area increase along the suite; the last
    scenes include clipped highlights and one uses a textured albedo.
    """
    sphere = hemisphere_depth(size)
    blobs = blobs_depth(size)
    red = np.array([0.62, 0.33, 0.22])
    blue = np.array([0.25, 0.42, 0.60])
    light_a = np.array([0.35, 0.25, 1.0])
    light_b = np.array([-0.3, 0.45, 1.0])
    scenes = [
        SceneSpec(sphere, red, light_a, k_s=0.06, shininess=120.0,
                  polarization_fraction=0.8, name="suite0-weak"),
        SceneSpec(sphere, blue, light_b, k_s=0.2, shininess=90.0,
                  polarization_fraction=0.8, name="suite1-mild"),
        SceneSpec(blobs, red, light_a, k_s=0.4, shininess=70.0,
                  polarization_fraction=0.7, name="suite2-moderate"),
        SceneSpec(sphere, red, light_b, k_s=0.8, shininess=60.0,
                  polarization_fraction=0.8, name="suite3-strong"),
        SceneSpec(blobs, blue, light_a, k_s=1.2, shininess=60.0,
                  polarization_fraction=0.7, name="suite4-stronger"),
        SceneSpec(sphere, red, light_a, k_s=3.0, shininess=120.0,
                  polarization_fraction=0.8, name="suite5-saturated"),
        SceneSpec(sphere, checker_albedo(size, period=max(size // 8, 2)),
                  light_a, k_s=3.0, shininess=90.0,
                  polarization_fraction=0.8,
                  name="suite6-textured-saturated"),
    ]
    return [render(s) for s in scenes]


_DEPTH_BUILDERS = {"hemisphere": hemisphere_depth, "blobs": blobs_depth}


def scene_from_dict(cfg: dict) -> SceneSpec:
    """Build a :class:`SceneSpec` from a declarative dictionary.

    ``depth`` is either ``{"kind": "hemisphere"|"blobs", "size": N, ...}``
    or an explicit nested list; ``albedo`` is an RGB triple, a nested array,
    or ``{"kind": "checker", "size": N, ...}``.
    """
    cfg = dict(cfg)
    depth = cfg.pop("depth")
    if isinstance(depth, dict):
        depth = dict(depth)
        builder = _DEPTH_BUILDERS[depth.pop("kind")]
        depth = builder(**depth)
    else:
        depth = np.asarray(depth, dtype=np.float64)
    albedo = cfg.pop("albedo")
    if isinstance(albedo, dict):
        albedo = dict(albedo)
        if albedo.pop("kind") != "checker":
            raise ValueError("unknown albedo kind")
        albedo = checker_albedo(**albedo)
    return SceneSpec(depth=depth, albedo=np.asarray(albedo, dtype=np.float64),
                     light_dir=np.asarray(cfg.pop("light_dir"), dtype=np.float64),
                     **cfg)


def load_scene(path) -> SceneSpec:
    """Read a scene description from a JSON file."""
    with open(path) as f:
        return scene_from_dict(json.load(f))
