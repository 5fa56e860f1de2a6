"""Building the representation tensor and mapping back to images.

Every pixel gets ``n4`` "representations": pixels from the same block whose
polarization chromaticity is within a threshold, sampled at random (the pixel
itself is always representation 0).  Gathering those candidates over the four
polarizer angles and unfolding color channels side by side yields a tensor of
shape (4*n1, 3*n2, n4) whose mode-3 fibers are chromatically consistent, the
structure the low-rank decomposition exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polar_model import ANGLES_RAD, ChromaticityImage, PolarStack


@dataclass(frozen=True)
class TensorLayout:
    """Row/column block layout of the representation tensor.

    Rows are the four polarizer-angle blocks of ``n1`` image rows each;
    columns are the R, G, B channel blocks of ``n2`` image columns each.
    """

    n1: int
    n2: int
    n4: int
    n3: int = 3
    angles: tuple = tuple(float(a) for a in ANGLES_RAD)

    @property
    def k(self) -> int:
        return 4 * self.n1

    @property
    def m(self) -> int:
        return self.n3 * self.n2

    @property
    def shape(self) -> tuple:
        return (self.k, self.m, self.n4)


@dataclass(frozen=True)
class CandidateMap:
    """Per-pixel representation sources.

    ``rows``/``cols`` have shape (H, W, n4) and give the source pixel of each
    representation; entry 0 is always the pixel itself.
    """

    rows: np.ndarray
    cols: np.ndarray
    block_size: int
    threshold: float
    seed: int

    @property
    def n4(self) -> int:
        return self.rows.shape[2]


@dataclass(frozen=True)
class RepresentationTensor:
    """The folded tensor plus everything needed to invert the construction."""

    d: np.ndarray
    layout: TensorLayout
    provenance: CandidateMap


def _chro_array(chro) -> np.ndarray:
    if isinstance(chro, ChromaticityImage):
        return chro.chro
    return np.asarray(chro, dtype=np.float64)


def select_candidates(chro, block_size: int, n4: int, threshold: float,
                      seed: int) -> CandidateMap:
    """Random chromaticity-consistent candidates per pixel.

    The image is tiled into ``block_size`` x ``block_size`` blocks (edge
    blocks may be smaller).  For each pixel, candidates are drawn uniformly
    without replacement from the pixels of its own block whose chromaticity
    lies within ``threshold`` (L2); shortfalls are padded with the pixel
    itself.  Deterministic given ``seed``: every block uses its own RNG
    stream derived from (seed, block row, block col).
    """
    chro = _chro_array(chro)
    if block_size < 1 or n4 < 1:
        raise ValueError("block_size and n4 must be >= 1")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    h, w = chro.shape[:2]
    rows = np.empty((h, w, n4), dtype=np.intp)
    cols = np.empty((h, w, n4), dtype=np.intp)
    for by in range(0, h, block_size):
        for bx in range(0, w, block_size):
            ys = slice(by, min(by + block_size, h))
            xs = slice(bx, min(bx + block_size, w))
            yy, xx = np.mgrid[ys, xs]
            yy = yy.ravel()
            xx = xx.ravel()
            block_chro = chro[ys, xs].reshape(-1, chro.shape[-1])
            dist = np.linalg.norm(block_chro[:, None, :] - block_chro[None, :, :],
                                  axis=-1)
            rng = np.random.default_rng([seed, by // block_size, bx // block_size])
            for p in range(yy.size):
                ok = np.nonzero(dist[p] < threshold)[0]
                ok = ok[ok != p]
                take = min(n4 - 1, ok.size)
                picked = rng.choice(ok, size=take, replace=False) if take else []
                idx = np.concatenate(([p], np.asarray(picked, dtype=np.intp),
                                      np.full(n4 - 1 - take, p, dtype=np.intp)))
                rows[yy[p], xx[p]] = yy[idx]
                cols[yy[p], xx[p]] = xx[idx]
    return CandidateMap(rows=rows, cols=cols, block_size=block_size,
                        threshold=threshold, seed=seed)


def initialize_diffuse(stack: PolarStack, chro, window: int = 1,
                       similarity: float = 0.1, tol: float = 0.03,
                       max_iters: int = 10) -> PolarStack:
    """Chromaticity-propagation estimate of the diffuse components.

    For each polarizer-angle image, the maximum diffuse chromaticity of each
    pixel is estimated by iteratively propagating the max-channel
    chromaticity from neighbors with similar polarization chromaticity
    (which is insensitive to the specular term), stopping when the largest
    change drops below ``tol`` or after ``max_iters`` sweeps.  Under a white
    (normalized) specular term the additive highlight then has the closed
    form ``s = (max_c I - lam_d * sum_c I) / (1 - 3*lam_d)``, which is
    subtracted and the result clamped to [0, input].  Works where the
    diffuse color is chromatic; achromatic pixels are left untouched.
    """
    chro = _chro_array(chro)
    out = np.empty_like(stack.images)
    offsets = [(dy, dx) for dy in range(-window, window + 1)
               for dx in range(-window, window + 1)]
    for a in range(4):
        img = stack.images[a]
        total = img.sum(axis=-1)
        safe = total > 1e-8
        lam = np.where(safe, img.max(axis=-1) / np.where(safe, total, 1.0),
                       1.0 / 3.0)
        lam_d = lam.copy()
        for _ in range(max_iters):
            prev = lam_d
            best = lam_d.copy()
            for dy, dx in offsets:
                if dy == 0 and dx == 0:
                    continue
                shifted = _shift(lam_d, dy, dx)
                chro_shift = _shift(chro, dy, dx)
                near = np.linalg.norm(chro - chro_shift, axis=-1) < similarity
                np.maximum(best, np.where(near, shifted, -np.inf), out=best)
            lam_d = best
            if np.max(np.abs(lam_d - prev)) < tol:
                break
        denom = 1.0 - 3.0 * lam_d
        chromatic = lam_d > 1.0 / 3.0 + 1e-6
        s = np.where(chromatic,
                     (img.max(axis=-1) - lam_d * total) / np.where(chromatic, denom, 1.0),
                     0.0)
        s = np.clip(s, 0.0, img.min(axis=-1))
        out[a] = img - s[..., None]
    return PolarStack(np.clip(out, 0.0, stack.images))


def _shift(arr, dy, dx):
    """Shift with edge replication so borders see clamped neighbors."""
    out = arr
    if dy:
        out = np.roll(out, dy, axis=0)
        if dy > 0:
            out[:dy] = out[dy]
        else:
            out[dy:] = out[dy - 1]
    else:
        out = out.copy()
    if dx:
        out = np.roll(out, dx, axis=1)
        if dx > 0:
            out[:, :dx] = out[:, dx:dx + 1]
        else:
            out[:, dx:] = out[:, dx - 1:dx]
    return out


def gather_representations(stack: PolarStack, cmap: CandidateMap) -> np.ndarray:
    """Gather candidate pixels into a (4, n4, H, W, 3) representation array."""
    # (4, H, W, n4, 3) indexed by source pixel, then angle/representation first
    gathered = stack.images[:, cmap.rows, cmap.cols, :]
    return np.ascontiguousarray(np.transpose(gathered, (0, 3, 1, 2, 4)))


def fold(reps: np.ndarray) -> np.ndarray:
    """Fold a (4, n4, n1, n2, 3) representation array into (4*n1, 3*n2, n4).

    Pure rearrangement: pixel (r, c) of angle a, channel g, representation i
    lands at tensor entry (a*n1 + r, g*n2 + c, i).
    """
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim != 5 or reps.shape[0] != 4 or reps.shape[4] != 3:
        raise ValueError(f"expected shape (4, n4, n1, n2, 3), got {reps.shape}")
    _, n4, n1, n2, _ = reps.shape
    return np.transpose(reps, (0, 2, 4, 3, 1)).reshape(4 * n1, 3 * n2, n4)


def unfold(d: np.ndarray, layout: TensorLayout) -> np.ndarray:
    """Inverse of :func:`fold`: (4*n1, 3*n2, n4) -> (4, n4, n1, n2, 3)."""
    d = np.asarray(d)
    if d.shape != layout.shape:
        raise ValueError(f"tensor shape {d.shape} does not match layout "
                         f"{layout.shape}")
    n1, n2, n4 = layout.n1, layout.n2, layout.n4
    return np.transpose(d.reshape(4, n1, 3, n2, n4), (0, 4, 1, 3, 2))


def build_tensor(stack: PolarStack, cmap: CandidateMap) -> RepresentationTensor:
    """Gather candidates and fold them into a representation tensor."""
    reps = gather_representations(stack, cmap)
    layout = TensorLayout(n1=stack.height, n2=stack.width, n4=cmap.n4)
    return RepresentationTensor(d=fold(reps), layout=layout, provenance=cmap)


def extract_diffuse(l_tensor: np.ndarray, layout: TensorLayout) -> np.ndarray:
    """Final diffuse image from the low-rank tensor.

    Representation slice 0 is the identity representation; its four
    polarizer-angle images are averaged and clamped to [0, 1].
    """
    imgs = unfold(np.asarray(l_tensor), layout)[:, 0]
    return np.clip(imgs.mean(axis=0), 0.0, 1.0)
