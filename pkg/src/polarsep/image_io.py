"""Raster I/O: 8/16-bit PNG for display artifacts, float32 PFM for the
numeric round-trip path."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image


class ImageIOError(RuntimeError):
    pass


def read_image(path) -> np.ndarray:
    """Load an image as float64 (H, W, 3) in [0, 1] (PFM values pass through)."""
    path = Path(path)
    if not path.exists():
        raise ImageIOError(f"no such file: {path}")
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    if path.suffix.lower() == ".npy":
        arr = np.load(path).astype(np.float64)
    else:
        with Image.open(path) as im:
            mode = im.mode
            arr = np.asarray(im, dtype=np.float64)
        if mode.startswith("I") or arr.max() > 255:
            arr = arr / 65535.0
        elif mode != "F":
            arr = arr / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[-1] == 4:
        arr = arr[..., :3]
    if not np.all(np.isfinite(arr)):
        raise ImageIOError(f"non-finite pixels in {path}")
    return arr


def write_png(path, img, bits: int = 8):
    """Write an image in [0, 1] as an 8- or 16-bit PNG."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        data = np.round(img * 255.0).astype(np.uint8)
        Image.fromarray(data).save(path)
    elif bits == 16:
        data = np.round(img * 65535.0).astype(np.uint16)
        if data.ndim == 3:
            # Pillow lacks 16-bit RGB; store channels as separate grayscale rows
            raise ImageIOError("16-bit PNG supported for grayscale only")
        Image.fromarray(data, mode="I;16").save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def write_pfm(path, img):
    """Write a float32 color PFM (little-endian, rows bottom to top)."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        header = b"Pf\n"
        data = img[::-1]
    elif img.ndim == 3 and img.shape[2] == 3:
        header = b"PF\n"
        data = img[::-1]
    else:
        raise ValueError(f"PFM needs (H, W) or (H, W, 3), got {img.shape}")
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{img.shape[1]} {img.shape[0]}\n".encode())
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file written by :func:`write_pfm` (or any standard PFM)."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise ImageIOError(f"not a PFM file: {path}")
        dims = f.readline()
        while dims.strip().startswith(b"#"):
            dims = f.readline()
        match = re.match(rb"^(\d+)\s+(\d+)", dims)
        if not match:
            raise ImageIOError(f"bad PFM header in {path}")
        width, height = int(match.group(1)), int(match.group(2))
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * (3 if magic == b"PF" else 1)
        data = np.frombuffer(f.read(count * 4), dtype=dtype, count=count)
    shape = (height, width, 3) if magic == b"PF" else (height, width)
    arr = data.reshape(shape)[::-1].astype(np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr
