import math

import numpy as np
import pytest

from polarsep.decomposer import (SolverConfig, auto_lambda, phase_project,
                                 solve, tau_formula, tau_weight)
from polarsep.representations import TensorLayout, fold, unfold


def tubal_rank1(k, m, n4, rng, scale=1.0):
    """Rank-1 (tubal) tensor: slice-wise product of two random real tubes."""
    a = rng.standard_normal((k, 1, n4))
    b = rng.standard_normal((1, m, n4))
    af = np.fft.fft(a, axis=2)
    bf = np.fft.fft(b, axis=2)
    lf = np.einsum("koj,omj->kmj", af, bf)
    return scale * np.fft.ifft(lf, axis=2).real


def reps_from_model(i_c, i_sv, phi, layout):
    angles = np.asarray(layout.angles).reshape(4, 1, 1, 1, 1)
    return i_c[None] + i_sv[None] * np.cos(2 * angles - 2 * phi[None])


class TestTauWeight:
    def test_flat_dark_region(self):
        d = np.zeros((6, 6, 2))
        assert np.allclose(tau_weight(d), 1.0)

    def test_saturated_flat_region(self):
        d = np.ones((6, 6, 2))
        assert np.allclose(tau_weight(d), 0.0)

    def test_formula_spot_check(self):
        assert math.isclose(float(tau_formula(0.5, 1.0, 2.0, 0.25)),
                            0.5 * math.e ** 2, rel_tol=1e-12)

    def test_broadcast_over_slices(self):
        rng = np.random.default_rng(0)
        d = np.repeat(rng.uniform(0, 1, (5, 5, 1)), 4, axis=2)
        tau = tau_weight(d)
        assert tau.shape == (5, 5, 4)
        assert np.allclose(tau, tau[:, :, :1])

    def test_out_of_range_input_clamped(self):
        d = np.full((4, 4, 1), 3.0)
        assert np.allclose(tau_weight(d), 0.0)


class TestPhaseProject:
    layout = TensorLayout(n1=4, n2=5, n4=2)

    def random_model(self, rng, shared_phase=False):
        shape = (self.layout.n4, self.layout.n1, self.layout.n2, 3)
        i_c = rng.uniform(0.2, 0.8, shape)
        i_sv = rng.uniform(0.0, 0.15, shape)
        if shared_phase:
            phi = np.repeat(rng.uniform(0, np.pi, shape[:-1])[..., None], 3,
                            axis=-1)
        else:
            phi = rng.uniform(0, np.pi, shape)
        return i_c, i_sv, phi

    def test_fixed_point_on_consistent_phases(self):
        rng = np.random.default_rng(1)
        i_c, i_sv, phi = self.random_model(rng, shared_phase=True)
        d = fold(reps_from_model(i_c, i_sv, phi, self.layout))
        assert np.allclose(phase_project(d, self.layout), d, atol=1e-10)

    def test_equal_amplitude_phases_average(self):
        layout = TensorLayout(n1=1, n2=1, n4=1)
        i_c = np.full((1, 1, 1, 3), 0.5)
        i_sv = np.full((1, 1, 1, 3), 0.1)
        phi = np.deg2rad([10.0, 20.0, 30.0]).reshape(1, 1, 1, 3)
        q = phase_project(fold(reps_from_model(i_c, i_sv, phi, layout)), layout)
        # oracle: re-synthesize with the averaged phase
        expected = fold(reps_from_model(
            i_c, i_sv, np.full_like(phi, np.deg2rad(20.0)), layout))
        assert np.allclose(q, expected, atol=1e-12)

    def test_zero_amplitude_is_identity(self):
        rng = np.random.default_rng(2)
        i_c, _, phi = self.random_model(rng)
        d = fold(reps_from_model(i_c, np.zeros_like(i_c), phi, self.layout))
        assert np.array_equal(phase_project(d, self.layout), d)

    def test_idempotent_on_random_input(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(0, 1, self.layout.shape)
        q1 = phase_project(d, self.layout)
        q2 = phase_project(q1, self.layout)
        assert np.allclose(q2, q1, atol=1e-9)


class TestAutoLambda:
    def test_paper_dimensions(self):
        assert math.isclose(auto_lambda(64, 64, 3, 8),
                            1.0 / math.sqrt(4096 * 8), rel_tol=1e-12)

    def test_unit_dimensions(self):
        assert auto_lambda(1, 1, 1, 1) == 1.0

    def test_degenerate_max_branch(self):
        assert math.isclose(auto_lambda(2, 3, 100, 5),
                            1.0 / math.sqrt(100 * 5), rel_tol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            auto_lambda(0, 1, 1, 1)


class TestSolve:
    def test_zero_tensor_one_iteration(self):
        res = solve(np.zeros((6, 6, 2)), SolverConfig(mode="plain"))
        assert res.converged and res.iterations == 1
        assert np.all(res.l_tensor == 0) and np.all(res.s_tensor == 0)

    def test_exact_low_rank_recovered(self):
        rng = np.random.default_rng(4)
        d = tubal_rank1(20, 20, 4, rng, scale=0.1)
        res = solve(d, SolverConfig(mode="plain", max_iters=300))
        assert res.converged
        assert res.trace[-1].error < 1e-5
        assert np.linalg.norm(res.s_tensor) < 1e-2 * np.linalg.norm(d)
        assert np.linalg.norm(res.l_tensor - d) < 1e-2 * np.linalg.norm(d)

    def test_planted_sparse_recovery(self):
        rng = np.random.default_rng(5)
        l0 = tubal_rank1(32, 32, 4, rng)
        scale = np.abs(l0).mean()
        support = rng.uniform(size=l0.shape) < 0.01
        spikes = support * 10.0 * scale * np.sign(rng.standard_normal(l0.shape))
        res = solve(l0 + spikes, SolverConfig(mode="plain", max_iters=300))
        assert res.converged
        rel_l = np.linalg.norm(res.l_tensor - l0) / np.linalg.norm(l0)
        assert rel_l < 1e-3
        found = np.abs(res.s_tensor) > 1e-6 * scale
        assert np.array_equal(found, support)

    def test_error_trend_windowed_monotone(self):
        rng = np.random.default_rng(6)
        d = tubal_rank1(16, 16, 3, rng) + 0.05 * rng.standard_normal((16, 16, 3))
        res = solve(d, SolverConfig(mode="plain", max_iters=120))
        errors = [r.error for r in res.trace][-10:]
        assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))

    def test_full_with_zero_gamma_matches_plain(self):
        rng = np.random.default_rng(7)
        layout = TensorLayout(n1=4, n2=4, n4=3)
        d = rng.uniform(0, 1, layout.shape)
        full = solve(d, SolverConfig(mode="full", gamma0=0.0, gamma_growth=1.0,
                                     use_tau=False, max_iters=40), layout)
        plain = solve(d, SolverConfig(mode="plain", max_iters=40))
        assert np.array_equal(full.l_tensor, plain.l_tensor)
        assert np.array_equal(full.s_tensor, plain.s_tensor)

    def test_both_l_step_orderings_converge(self):
        rng = np.random.default_rng(8)
        layout = TensorLayout(n1=6, n2=6, n4=2)
        d = rng.uniform(0, 0.8, layout.shape)
        for weighted in (False, True):
            res = solve(d, SolverConfig(mode="full",
                                        mu_weighted_phase=weighted,
                                        max_iters=300), layout)
            assert res.converged, f"mu_weighted_phase={weighted}"

    def test_no_phase_mode_runs_without_layout(self):
        rng = np.random.default_rng(9)
        d = rng.uniform(0, 1, (8, 8, 2))
        res = solve(d, SolverConfig(mode="no-phase", max_iters=150))
        assert res.trace[-1].error <= 1e-5 or not res.converged

    def test_full_mode_requires_layout(self):
        with pytest.raises(ValueError):
            solve(np.ones((4, 4, 2)), SolverConfig(mode="full"))

    def test_nonfinite_input_rejected(self):
        with pytest.raises(ValueError):
            solve(np.full((4, 4, 2), np.nan), SolverConfig(mode="plain"))

    def test_trace_csv(self, tmp_path):
        rng = np.random.default_rng(10)
        res = solve(rng.uniform(0, 1, (6, 6, 2)),
                    SolverConfig(mode="plain", max_iters=30))
        path = tmp_path / "trace.csv"
        res.write_trace_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,error,objective,mu,gamma"
        assert len(lines) == len(res.trace) + 1

    def test_constraint_satisfied_on_convergence(self):
        rng = np.random.default_rng(11)
        d = tubal_rank1(16, 16, 4, rng)
        res = solve(d, SolverConfig(mode="plain", max_iters=300))
        assert res.converged
        err = np.linalg.norm(d - res.l_tensor - res.s_tensor) / np.linalg.norm(d)
        assert err <= 1e-5


class TestSolverConfig:
    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            SolverConfig(mode="bogus")

    def test_invalid_tolerance(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0.0)
