"""Kernel Stein discrepancy, moments, tempered traces, and the loop oracle."""

import numpy as np
import pytest

from kfrflow.diagnostics import (
    KsdConfig,
    ksd,
    moments,
    stein_kernel_matrix,
    tempered_ksd_trace,
    velocity_oracle,
)
from kfrflow.errors import CapabilityError
from kfrflow.flows import kfrflow_i_step, kfrflow_velocity
from kfrflow.kernels import KernelSpec, imq_eval
from kfrflow.particles import Ensemble
from kfrflow.targets import make_bayesian_2d, make_gaussian

from helpers import central_diff_grad, mixed_second_trace, rel_err


def stein_kernel_scalar(x, y, sx, sy, h):
    """Independent scalar transcription of the Langevin Stein kernel."""
    u = x - y
    q = (1.0 + np.dot(u, u) / h**2) ** -0.5
    grad_x = -u / h**2 * q**3
    grad_y = +u / h**2 * q**3
    trace = len(x) / h**2 * q**3 - 3.0 * np.dot(u, u) / h**4 * q**5
    return trace + np.dot(grad_x, sy) + np.dot(grad_y, sx) + q * np.dot(sx, sy)


class TestKsd:
    def test_single_sample_zero_score(self):
        for d in (1, 2, 3):
            x = np.full((1, d), 0.3)
            val = ksd(x, lambda z: np.zeros_like(z))
            assert val == pytest.approx(np.sqrt(d), rel=1e-12)

    def test_matrix_matches_scalar_transcription(self):
        g = make_gaussian([0.5, -0.2], 0.7)
        rng = np.random.default_rng(90)
        x = rng.standard_normal((6, 2))
        s = g.score_target(x)
        k0 = stein_kernel_matrix(x, s, 1.0)
        for i in range(6):
            for j in range(6):
                expected = stein_kernel_scalar(x[i], x[j], s[i], s[j], 1.0)
                assert k0[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-14)

    def test_imq_derivative_formulas_match_finite_differences(self):
        rng = np.random.default_rng(91)
        h = 1.0
        for _ in range(10):
            x, y = rng.standard_normal((2, 3))
            u = x - y
            q = (1.0 + np.dot(u, u) / h**2) ** -0.5
            grad_x = -u / h**2 * q**3
            grad_y = +u / h**2 * q**3
            fd_x = central_diff_grad(lambda z: imq_eval(z, y, h), x)
            fd_y = central_diff_grad(lambda z: imq_eval(x, z, h), y)
            assert rel_err(grad_x, fd_x) < 1e-6
            assert rel_err(grad_y, fd_y) < 1e-6
            term1 = 3.0 / h**2 * q**3
            term2 = 3.0 * np.dot(u, u) / h**4 * q**5
            trace = term1 - term2
            fd_trace = mixed_second_trace(lambda a, b: imq_eval(a, b, h), x, y)
            # the two terms cancel for distant pairs, so normalize by their
            # scale rather than by the (possibly vanishing) difference
            assert abs(trace - fd_trace) / (term1 + term2) < 1e-6

    def test_discriminates_wrong_location(self):
        rng = np.random.default_rng(92)
        good = rng.standard_normal((200, 1))
        bad = rng.standard_normal((200, 1)) + 3.0
        score = lambda x: -x  # N(0,1)
        assert ksd(bad, score) > 5.0 * ksd(good, score)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(93)
        x = rng.standard_normal((20, 2))
        score = lambda z: -z
        val = ksd(x, score)
        assert ksd(x[rng.permutation(20)], score) == pytest.approx(val, rel=1e-12)

    def test_u_statistic_clamps_and_validates(self):
        rng = np.random.default_rng(94)
        x = rng.standard_normal((30, 1))
        u = ksd(x, lambda z: -z, KsdConfig(estimator="u"))
        v = ksd(x, lambda z: -z, KsdConfig(estimator="v"))
        assert u >= 0.0
        assert v >= u  # V-statistic includes the nonnegative diagonal
        with pytest.raises(ValueError):
            ksd(x[:1], lambda z: -z, KsdConfig(estimator="u"))

    def test_missing_score_is_capability_error(self):
        with pytest.raises(CapabilityError):
            ksd(np.zeros((3, 1)), None)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            KsdConfig(h=0.0)
        with pytest.raises(ValueError):
            KsdConfig(estimator="w")


class TestMoments:
    def test_two_point_hand_values(self):
        mean, cov = moments(np.array([[-1.0], [1.0]]))
        assert mean[0] == 0.0
        assert cov[0, 0] == 2.0

    def test_repeated_point_zero_covariance(self):
        mean, cov = moments(np.full((4, 2), 1.5))
        assert np.array_equal(mean, [1.5, 1.5])
        assert np.array_equal(cov, np.zeros((2, 2)))

    def test_monte_carlo_standard_normal(self):
        rng = np.random.default_rng(95)
        x = rng.standard_normal((10_000, 2))
        mean, cov = moments(x)
        assert np.all(np.abs(mean) < 0.05)
        assert np.all(np.abs(np.diag(cov) - 1.0) < 0.05)

    def test_single_particle_rejected(self):
        with pytest.raises(ValueError, match="covariance"):
            moments(np.zeros((1, 3)))


class TestTemperedTrace:
    def test_identity_target_is_flat(self):
        g = make_gaussian(np.zeros(2), 1.0)
        rng = np.random.default_rng(96)
        x = rng.standard_normal((40, 2))
        trace = tempered_ksd_trace([(0.0, x), (0.5, x), (1.0, x)], g)
        vals = [v for _, v in trace]
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        assert vals[0] == pytest.approx(vals[2], rel=1e-12)

    def test_initial_entry_is_reference_ksd(self):
        donut = make_bayesian_2d("donut")
        rng = np.random.default_rng(97)
        x = rng.standard_normal((50, 2))
        trace = tempered_ksd_trace([(0.0, x)], donut)
        t0, val = trace[0]
        assert t0 == 0.0
        assert val == pytest.approx(ksd(x, lambda z: -z), rel=1e-12)
        assert val > 0.0  # nonzero at finite ensemble size

    def test_transport_trace_finite_everywhere(self):
        donut = make_bayesian_2d("donut")
        rng = np.random.default_rng(98)
        spec = KernelSpec()
        n = 256
        ens = Ensemble(donut.sample_reference(rng, 100), 0.0)
        snapshots = [(0.0, ens.positions)]
        for k in range(n):
            ens = kfrflow_i_step(ens, donut, spec, 1.0 / n, 1e-6)
            ens = Ensemble(ens.positions, (k + 1) / n)
            snapshots.append((ens.t, ens.positions))
        trace = tempered_ksd_trace(snapshots, donut)
        assert len(trace) == n + 1
        assert all(np.isfinite(v) for _, v in trace)

    def test_accepts_ensembles(self):
        g = make_gaussian(np.zeros(1), 1.0)
        e = Ensemble(np.array([[0.1], [0.4]]), 0.25)
        trace = tempered_ksd_trace([e], g)
        assert trace[0][0] == 0.25

    def test_missing_scores_rejected(self):
        from kfrflow.targets import TargetModel

        bare = TargetModel(
            name="bare",
            dim=1,
            log_ratio=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
            sample_reference=lambda rng, n: rng.standard_normal((n, 1)),
        )
        with pytest.raises(CapabilityError):
            tempered_ksd_trace([(0.0, np.zeros((2, 1)))], bare)


class TestVelocityOracle:
    def test_constant_ratio_gives_zero(self):
        from kfrflow.targets import TargetModel

        const = TargetModel(
            name="const",
            dim=2,
            log_ratio=lambda x: np.full(np.atleast_2d(x).shape[0], 2.0),
            sample_reference=lambda rng, n: rng.standard_normal((n, 2)),
        )
        rng = np.random.default_rng(99)
        e = Ensemble(rng.standard_normal((4, 2)), 0.0)
        v = velocity_oracle(e, const, KernelSpec(bandwidth=0.5), 1e-6)
        assert np.allclose(v, 0.0, atol=1e-12)

    def test_agrees_with_vectorized_velocity(self):
        g = make_gaussian([0.8, 0.0], 0.6)
        rng = np.random.default_rng(100)
        e = Ensemble(rng.standard_normal((6, 2)), 0.0)
        spec = KernelSpec(bandwidth=0.5)
        for lam in (0.0, 1e-3):
            v = kfrflow_velocity(e, g, spec, lam)
            vo = velocity_oracle(e, g, spec, lam)
            assert np.linalg.norm(v - vo) <= 1e-10 * (1 + np.linalg.norm(vo))

    def test_permutation_equivariance(self):
        g = make_gaussian([0.5], 0.7)
        rng = np.random.default_rng(101)
        x = rng.standard_normal((5, 1))
        perm = rng.permutation(5)
        spec = KernelSpec(bandwidth=0.5)
        v = velocity_oracle(Ensemble(x, 0.0), g, spec, 1e-6)
        vp = velocity_oracle(Ensemble(x[perm], 0.0), g, spec, 1e-6)
        assert np.allclose(vp, v[perm], rtol=1e-10, atol=1e-13)
