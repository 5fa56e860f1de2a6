"""Acceptance gate: every release criterion, one pass/fail line each.

Each test appends a ``[PASS]``/``[FAIL]`` line to ``CHECKLIST`` (printed in
the terminal summary, see conftest.py) and then asserts. Oracles: criteria
1-3 and 9 check against independent brute-force or closed-form oracles
[DERIVED]; 6-7 are closed-form formula checks [DERIVED]; 4-5 and 8 are
end-to-end property thresholds on self-generated ground truth.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from polarsep.decomposer import (SolverConfig, auto_lambda, phase_project,
                                 solve, tau_formula)
from polarsep.metrics import compare
from polarsep.pipeline import (PipelineConfig, mean_baseline_report,
                               run_suite, separate)
from polarsep.polar_model import ANGLES_RAD, PolarStack, fit_cosine_model
from polarsep.representations import TensorLayout, fold
from polarsep.synth import scene_suite
from polarsep.tensor_core import tensor_nuclear_norm, tsvt

CHECKLIST = []


def check(name: str, ok: bool, detail: str):
    CHECKLIST.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def suite128():
    return scene_suite(128)


def test_cosine_model_round_trip():
    rng = np.random.default_rng(20240811)
    n = 100_000
    h, w = 250, 134  # 250*134*3 > 1e5 pixels-channels
    i_c = rng.uniform(0.05, 1.0, (h, w, 3))
    i_sv = i_c * rng.uniform(0.01, 1.0, (h, w, 3))
    phi = rng.uniform(0.01, np.pi - 0.01, (h, w, 3))
    t0 = time.perf_counter()
    images = i_c[None] + i_sv[None] * np.cos(
        2.0 * ANGLES_RAD.reshape(4, 1, 1, 1) - 2.0 * phi[None])
    dec = fit_cosine_model(PolarStack(images))
    err = max(np.abs((dec.i_c - i_c) / i_c).max(),
              np.abs((dec.i_sv - i_sv) / i_sv).max(),
              np.abs((dec.phi - phi) / phi).max())
    elapsed = time.perf_counter() - t0
    check("cosine round trip",
          bool(err <= 1e-9 and elapsed < 5.0 and h * w * 3 >= n),
          f"max rel err {err:.2e} (<=1e-9), {elapsed:.2f}s (<5s)")


def _tnn_batch(stack4: np.ndarray) -> np.ndarray:
    """Tensor nuclear norms of a batch (p, n1, n2, n4) of real tensors."""
    p, n1, n2, n4 = stack4.shape
    f = np.fft.fft(stack4, axis=3)
    half = n4 // 2 + 1
    # conjugate symmetry of the real FFT: slices j and n4-j share spectra
    weights = np.array([2.0 if 0 < j < n4 - j else 1.0 for j in range(half)])
    slices = np.moveaxis(f[:, :, :, :half], 3, 1).reshape(p * half, n1, n2)
    sv = np.linalg.svd(slices, compute_uv=False)
    per_slice = sv.sum(axis=1).reshape(p, half)
    return per_slice @ weights / n4


def test_tsvt_prox_optimality_oracle():
    rng = np.random.default_rng(7)
    n_tensors, n_pert = 200, 10_000
    worst = -np.inf
    matrix_gap = 0.0
    for _ in range(n_tensors):
        n1, n2, n4 = rng.integers(2, 9), rng.integers(2, 9), rng.integers(1, 6)
        x = rng.normal(size=(n1, n2, n4))
        t = float(rng.uniform(0.05, 1.5))
        y = tsvt(x, t)
        obj_y = 0.5 * np.sum((x - y) ** 2) + t * tensor_nuclear_norm(y)
        scale = rng.uniform(1e-4, 0.5, n_pert)
        g = rng.normal(size=(n_pert, n1, n2, n4))
        g *= (scale / np.sqrt(np.sum(g ** 2, axis=(1, 2, 3))))[:, None, None, None]
        z = y[None] + g
        obj_z = 0.5 * np.sum((x[None] - z) ** 2, axis=(1, 2, 3)) \
            + t * _tnn_batch(z)
        worst = max(worst, float(obj_y - obj_z.min()))
        if n4 == 1:
            u, s, vt = np.linalg.svd(x[:, :, 0], full_matrices=False)
            svt = (u * np.maximum(s - t, 0.0)) @ vt
            matrix_gap = max(matrix_gap,
                             float(np.abs(y[:, :, 0] - svt).max()))
    check("t-SVT prox oracle",
          bool(worst <= 1e-9 and matrix_gap <= 1e-10),
          f"max objective excess {worst:.2e} (<=1e-9) over "
          f"{n_tensors}x{n_pert} perturbations; "
          f"n4=1 vs matrix SVT {matrix_gap:.2e} (<=1e-10)")


def _tubal_rank1(k: int, m: int, n4: int, rng) -> np.ndarray:
    fa = np.fft.fft(rng.normal(size=(k, 1, n4)), axis=2)
    fb = np.fft.fft(rng.normal(size=(1, m, n4)), axis=2)
    return np.fft.ifft(np.einsum("koj,omj->kmj", fa, fb), axis=2).real


def test_planted_sparse_recovery():
    rng = np.random.default_rng(11)
    k = m = 64
    n4 = 8
    low = _tubal_rank1(k, m, n4, rng)
    low /= np.abs(low).max()
    spikes = np.zeros_like(low)
    idx = rng.choice(low.size, low.size // 100, replace=False)
    spikes.flat[idx] = 10.0 * rng.choice([-1.0, 1.0], idx.size)
    d = low + spikes
    cfg = SolverConfig(mode="plain", lam=1.0 / np.sqrt(max(k, m) * n4),
                       max_iters=300)
    res = solve(d, cfg)
    # support at 1e-4 of the spike magnitude, well below the signal scale
    support = np.abs(res.s_tensor) > 1e-3
    support_ok = np.array_equal(support, spikes != 0)
    rel_l = np.linalg.norm(res.l_tensor - low) / np.linalg.norm(low)
    final_err = res.trace[-1].error
    check("planted sparse recovery",
          bool(support_ok and rel_l < 1e-3 and res.iterations <= 300
               and final_err <= 1e-5),
          f"support exact={support_ok}, rel L err {rel_l:.2e} (<1e-3), "
          f"{res.iterations} iters (<=300), final error {final_err:.2e} "
          f"(<=1e-5)")


def test_weak_specular_end_to_end(suite128):
    scene = suite128[0]
    t0 = time.perf_counter()
    diffuse, _, _ = separate(scene.stack, PipelineConfig())
    elapsed = time.perf_counter() - t0
    rep = compare(diffuse, scene.diffuse_gt, mask=~scene.saturation)
    check("weak specular end-to-end",
          bool(rep.ssim >= 0.95 and rep.psnr >= 30.0 and elapsed < 60.0),
          f"ssim {rep.ssim:.4f} (>=0.95), psnr {rep.psnr:.2f} dB (>=30), "
          f"{elapsed:.1f}s (<60)")


def test_strong_specular_margins_and_ordering():
    # ablation study at 64x64 so three solver runs stay tractable; the
    # structural similarity ordering is judged on unsaturated pixels where
    # the comparison against ground truth is well posed
    scene = scene_suite(64)[-1]
    base = mean_baseline_report(scene)
    reports = {}
    for mode in ("full", "no-phase", "plain"):
        diffuse, _, _ = separate(scene.stack, PipelineConfig(mode=mode))
        reports[mode] = compare(diffuse, scene.diffuse_gt,
                                mask=~scene.saturation)
    gain_base = reports["full"].psnr - base.psnr
    gain_plain = reports["full"].psnr - reports["plain"].psnr
    order = (reports["full"].ssim_masked >= reports["no-phase"].ssim_masked
             >= reports["plain"].ssim_masked)
    check("strong specular margins",
          bool(gain_base >= 6.0 and gain_plain >= 1.0 and order),
          f"psnr gain vs baseline {gain_base:.2f} dB (>=6), vs plain "
          f"{gain_plain:.2f} dB (>=1); masked ssim full "
          f"{reports['full'].ssim_masked:.4f} "
          f">= no-phase {reports['no-phase'].ssim_masked:.4f} "
          f">= plain {reports['plain'].ssim_masked:.4f}: {order}")


def test_tau_spot_check():
    got = float(tau_formula(0.5, 1.0, alpha=2.0, beta=0.25))
    want = 0.5 * np.e ** 2
    check("tau spot check", bool(abs(got - want) <= 1e-12),
          f"tau(0.5, 1) = {got!r} vs 0.5*e^2 (|diff| <= 1e-12)")


def test_lambda_formula():
    got = auto_lambda(64, 64, 3, 8)
    want = 1.0 / np.sqrt(4096 * 8)
    check("auto lambda formula", bool(abs(got - want) <= 1e-12),
          f"auto_lambda(64,64,3,8) = {got!r} vs 1/sqrt(4096*8)")


def test_suite_determinism(tmp_path):
    scenes = scene_suite(48)[:2]
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        run_suite(out, cfg=PipelineConfig(block_size=8, n4=4),
                  scenes=scenes, modes=("full", "plain"))
        outs.append(out)
    # config.json echoes the output directory, so compare numeric artifacts
    names = sorted(str(p.relative_to(outs[0])) for p in outs[0].rglob("*")
                   if p.is_file() and p.name != "config.json")
    diffs = [n for n in names
             if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes()]
    check("suite determinism", not diffs,
          f"{len(names)} artifacts byte-compared, "
          f"{len(diffs)} differ {diffs[:3]}")


def test_phase_projector_idempotent_and_fixed_point():
    rng = np.random.default_rng(5)
    n1 = n2 = 100  # 10^4 pixels
    n4 = 4
    layout = TensorLayout(n1=n1, n2=n2, n4=n4)
    raw = rng.uniform(0.0, 1.0, (4, n4, n1, n2, 3))
    x = fold(raw)
    once = phase_project(x, layout)
    twice = phase_project(once, layout)
    idem = float(np.abs(twice - once).max())

    # channel-consistent input: one phase shared by all channels per pixel
    i_c = rng.uniform(0.2, 0.8, (n4, n1, n2, 3))
    i_sv = i_c * rng.uniform(0.05, 0.9, (n4, n1, n2, 3))
    phi = rng.uniform(0.0, np.pi, (n4, n1, n2, 1))
    angles = ANGLES_RAD.reshape(4, 1, 1, 1, 1)
    consistent = fold(i_c[None] + i_sv[None]
                      * np.cos(2.0 * angles - 2.0 * phi[None]))
    fixed = float(np.abs(phase_project(consistent, layout)
                         - consistent).max())
    check("phase projector",
          bool(idem <= 1e-9 and fixed <= 1e-9),
          f"idempotence gap {idem:.2e} (<=1e-9), channel-consistent "
          f"fixed-point gap {fixed:.2e} (<=1e-9) on {n1 * n2} pixels")
