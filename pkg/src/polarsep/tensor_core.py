"""Order-3 tensor algebra for the low-rank + sparse solver.

Tensors are plain real ndarrays of shape (k, m, n4).  The low-rank surrogate
is the t-SVD tensor nuclear norm: FFT along the third mode, then the mean
over transform slices of the matrix nuclear norm.  Its proximal operator
(tensor singular value thresholding) and the weighted element-wise shrinkage
are the two closed-form solvers used by the decomposition updates.
"""

from __future__ import annotations

import numpy as np


class SliceSvdError(RuntimeError):
    """SVD failed to converge on a transform-domain frontal slice."""

    def __init__(self, slice_index: int):
        self.slice_index = slice_index
        super().__init__(f"SVD did not converge on transform slice {slice_index}")


def _check_tensor3(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way tensor, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor contains non-finite entries")
    return x


def mode3_fft(x: np.ndarray) -> np.ndarray:
    """FFT along the third mode (unnormalized)."""
    return np.fft.fft(x, axis=2)


def mode3_ifft(xf: np.ndarray) -> np.ndarray:
    """Inverse of :func:`mode3_fft`."""
    return np.fft.ifft(xf, axis=2)


def fix_svd_signs(u, s, vt):
    """Deterministic SVD sign convention.

    Rotates each singular pair so the first component of the left singular
    vector with magnitude above a small floor is real and nonnegative.  The
    product ``u @ diag(s) @ vt`` is unchanged.
    """
    u = u.copy()
    vt = vt.copy()
    for j in range(s.shape[0]):
        col = u[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size == 0:
            continue
        lead = col[nz[0]]
        if np.iscomplexobj(u):
            rot = np.conj(lead) / abs(lead)
        else:
            rot = 1.0 if lead >= 0 else -1.0
        u[:, j] *= rot
        vt[j, :] *= np.conj(rot) if np.iscomplexobj(vt) else rot
    return u, s, vt


def _half_slices(n4: int) -> int:
    """Number of independent transform slices for a real tensor."""
    return n4 // 2 + 1


def tsvt(x, threshold: float):
    """Tensor singular value thresholding (prox of the tensor nuclear norm).

    Returns ``argmin_L threshold*TNN(L) + 0.5*||L - x||_F^2`` where TNN is
    the mean over transform slices of the matrix nuclear norm.  Each slice of
    the mode-3 FFT is soft-thresholded at ``threshold`` on its singular
    values; conjugate symmetry of real input halves the SVD work.
    """
    out, _ = tsvt_with_norm(x, threshold)
    return out


def tsvt_with_norm(x, threshold: float):
    """Like :func:`tsvt` but also returns TNN of the thresholded result."""
    x = _check_tensor3(x)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if threshold == 0:
        return x.copy(), tensor_nuclear_norm(x)
    n4 = x.shape[2]
    xf = mode3_fft(x)
    out = np.empty_like(xf)
    tnn = 0.0
    for j in range(_half_slices(n4)):
        try:
            u, s, vt = np.linalg.svd(xf[:, :, j], full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SliceSvdError(j) from exc
        u, s, vt = fix_svd_signs(u, s, vt)
        s = np.maximum(s - threshold, 0.0)
        out[:, :, j] = (u * s) @ vt
        # slice j and its mirror n4-j are conjugates; slice 0 (and the
        # Nyquist slice for even n4) have no distinct mirror
        weight = 2.0 if 0 < j < n4 - j else 1.0
        tnn += weight * s.sum()
    for j in range(_half_slices(n4), n4):
        out[:, :, j] = np.conj(out[:, :, n4 - j])
    res = mode3_ifft(out)
    # conjugate-symmetric spectrum: imaginary residue is FFT roundoff only
    return res.real, tnn / n4


def tensor_nuclear_norm(x) -> float:
    """Mean over transform slices of the sum of singular values."""
    x = _check_tensor3(x)
    n4 = x.shape[2]
    xf = mode3_fft(x)
    total = 0.0
    for j in range(_half_slices(n4)):
        s = np.linalg.svd(xf[:, :, j], compute_uv=False)
        weight = 2.0 if 0 < j < n4 - j else 1.0
        total += weight * s.sum()
    return total / n4


def weighted_shrink(x, weights, threshold: float) -> np.ndarray:
    """Element-wise soft thresholding with per-element weights.

    Returns ``sign(x) * max(|x| - threshold*weights, 0)``.  Weights must be
    nonnegative and broadcastable to ``x``; zero weight leaves the entry
    unchanged.
    """
    x = _check_tensor3(x)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("shrinkage weights must be nonnegative")
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return np.sign(x) * np.maximum(np.abs(x) - threshold * weights, 0.0)
