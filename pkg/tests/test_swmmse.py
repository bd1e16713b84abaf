import numpy as np
import pytest

from rlddu.channel.model import deterministic_stats, make_scenario, stats_for_block, to_antenna_domain
from rlddu.core.errors import DegenerateError
from rlddu.core.schemas import SystemDims
from rlddu.optim.swmmse import (
    BcdState,
    PrecoderSet,
    ewsr_eval,
    ewsr_samples,
    initial_precoders,
    matched_filter_init,
    rate_per_user,
    rates,
    scale_to_power,
    swmmse_run,
    swmmse_solve,
    update_u,
    update_v,
    update_w,
    weighted_sum_rate,
    wmmse_objective,
)
from tests.conftest import permute_users, point_mass_stats, random_mean


def scalar_dims(p_max: float = 1.0, sigma2: float = 1.0) -> SystemDims:
    return SystemDims(m_t=1, m_r=1, k_users=1, n_sub=12, p_max=p_max, noise_vars=(sigma2,), weights=(1.0,))


def random_precoders(rng: np.random.Generator, dims: SystemDims) -> PrecoderSet:
    shape = (dims.k_users, dims.m_t, dims.m_r)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return scale_to_power(PrecoderSet(matrices=v), dims.p_max)


class TestRates:
    def test_scalar_shannon(self):
        dims = scalar_dims(p_max=3.0)
        v = PrecoderSet(matrices=np.full((1, 1, 1), np.sqrt(3.0), dtype=complex))
        r = rate_per_user(np.ones((1, 1, 1), dtype=complex), v, dims)
        assert r[0] == pytest.approx(np.log2(4.0))

    def test_zero_precoders_give_zero_rate(self, small_dims):
        rng = np.random.default_rng(0)
        h = to_antenna_domain(random_mean(rng, small_dims))
        zeros = PrecoderSet.zeros(small_dims.k_users, small_dims.m_t, small_dims.m_r)
        assert not np.any(rates(h, zeros, small_dims))

    def test_surrogate_matches_at_full_power(self):
        dims = SystemDims.from_snr(m_t=4, m_r=2, k_users=2, n_sub=12, snr_db=10.0)
        rng = np.random.default_rng(7)
        h_f = to_antenna_domain(random_mean(rng, dims)[:, 0])
        v = random_precoders(rng, dims)
        np.testing.assert_allclose(
            rate_per_user(h_f, v, dims, surrogate=True),
            rate_per_user(h_f, v, dims),
            rtol=1e-12,
        )

    def test_rejects_beam_domain(self, small_dims):
        beam = PrecoderSet.zeros(small_dims.k_users, small_dims.m_t, small_dims.m_r, domain="beam")
        with pytest.raises(ValueError):
            rates(np.zeros((2, 12, 2, 8), dtype=complex), beam, small_dims)


class TestBcdUpdates:
    def test_scalar_updates(self):
        dims = scalar_dims()
        h = np.ones((1, 12, 1, 1), dtype=complex)
        v = PrecoderSet(matrices=np.ones((1, 1, 1), dtype=complex))
        u = update_u(h, v, dims)
        np.testing.assert_allclose(u, 0.5)
        np.testing.assert_allclose(update_w(h, v, u, dims), 2.0)

    def test_update_u_rejects_zero_precoders(self, small_dims):
        h = np.ones((2, 12, 2, 8), dtype=complex)
        with pytest.raises(DegenerateError):
            update_u(h, PrecoderSet.zeros(2, 8, 2), small_dims)

    def test_silent_user_gets_identity_weight(self, small_dims):
        rng = np.random.default_rng(1)
        h = to_antenna_domain(random_mean(rng, small_dims))
        v = random_precoders(rng, small_dims).matrices.copy()
        v[1] = 0.0
        precoders = PrecoderSet(matrices=v)
        u = update_u(h, precoders, small_dims)
        w = update_w(h, precoders, u, small_dims)
        np.testing.assert_allclose(w[1], np.broadcast_to(np.eye(2), w[1].shape), atol=1e-14)

    def test_update_u_is_stationary(self, small_dims):
        rng = np.random.default_rng(2)
        h = to_antenna_domain(random_mean(rng, small_dims))
        v = random_precoders(rng, small_dims)
        u = update_u(h, v, small_dims)
        w = update_w(h, v, u, small_dims)

        direction = rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)
        eps = 1e-5

        def objective(uu):
            return wmmse_objective(h, v, BcdState(u=uu, w=w), small_dims)

        slope = (objective(u + eps * direction) - objective(u - eps * direction)) / (2 * eps)
        assert abs(slope) <= 1e-4 * max(1.0, abs(objective(u)))

    def test_update_w_is_stationary(self, small_dims):
        rng = np.random.default_rng(3)
        h = to_antenna_domain(random_mean(rng, small_dims))
        v = random_precoders(rng, small_dims)
        u = update_u(h, v, small_dims)
        w = update_w(h, v, u, small_dims)

        direction = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
        direction = 0.5 * (direction + np.conj(np.swapaxes(direction, -1, -2)))
        eps = 1e-5

        def objective(ww):
            return wmmse_objective(h, v, BcdState(u=u, w=ww), small_dims)

        slope = (objective(w + eps * direction) - objective(w - eps * direction)) / (2 * eps)
        assert abs(slope) <= 1e-4 * max(1.0, abs(objective(w)))

    def test_update_v_averages_samples(self, small_dims):
        rng = np.random.default_rng(4)
        h = to_antenna_domain(random_mean(rng, small_dims))
        v = random_precoders(rng, small_dims)
        u = update_u(h, v, small_dims)
        w = update_w(h, v, u, small_dims)
        once = update_v([h], [u], [w], small_dims)
        twice = update_v([h, h], [u, u], [w, w], small_dims)
        np.testing.assert_allclose(twice.matrices, once.matrices, rtol=1e-12)

    def test_update_v_requires_samples(self, small_dims):
        with pytest.raises(ValueError):
            update_v([], [], [], small_dims)

    def test_scalar_fixed_point_at_full_power(self):
        dims = scalar_dims(p_max=1.0, sigma2=1e-6)
        stats = point_mass_stats(np.ones((1, 12, 1, 1)))
        precoders = swmmse_solve(stats, 10, 1, 0, dims)
        assert abs(precoders.matrices[0, 0, 0]) == pytest.approx(1.0, rel=1e-12)


class TestScaleToPower:
    def test_xi(self):
        v = PrecoderSet(matrices=np.full((1, 2, 2), 1.0, dtype=complex))
        scaled = scale_to_power(v, 1.0)
        np.testing.assert_allclose(scaled.matrices, 0.5)
        assert scaled.power == pytest.approx(1.0, rel=1e-12)

    def test_idempotent_and_direction_preserving(self, small_dims):
        rng = np.random.default_rng(5)
        v = PrecoderSet(matrices=rng.standard_normal((2, 8, 2)) + 1j * rng.standard_normal((2, 8, 2)))
        once = scale_to_power(v, 2.0)
        twice = scale_to_power(once, 2.0)
        np.testing.assert_allclose(twice.matrices, once.matrices, rtol=1e-14)
        ratio = once.matrices / v.matrices
        np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-12)
        assert np.real(ratio.flat[0]) > 0

    def test_zero_precoders(self):
        with pytest.raises(DegenerateError):
            scale_to_power(PrecoderSet.zeros(2, 4, 2), 1.0)


class TestPrecoderSet:
    def test_power_is_cached(self):
        v = PrecoderSet(matrices=np.full((2, 3, 1), 1.0 + 1.0j))
        assert v.power == pytest.approx(12.0)

    def test_domain_round_trip(self, small_dims):
        rng = np.random.default_rng(6)
        v = random_precoders(rng, small_dims)
        back = v.to_beam().to_antenna()
        np.testing.assert_allclose(back.matrices, v.matrices, atol=1e-14)
        assert v.to_beam().power == pytest.approx(v.power, rel=1e-12)

    def test_matched_filter_splits_power(self, small_dims, scenario):
        x = matched_filter_init(scenario, small_dims)
        assert x.domain == "beam"
        per_user = np.sum(np.abs(x.matrices) ** 2, axis=(1, 2))
        np.testing.assert_allclose(per_user, small_dims.p_max / small_dims.k_users)


class TestSwmmseSolve:
    def test_bcd_objective_is_monotone(self):
        dims = SystemDims.from_snr(m_t=8, m_r=2, k_users=3, n_sub=12, snr_db=10.0)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            stats = point_mass_stats(random_mean(rng, dims))
            h = to_antenna_domain(stats.mean)
            v = initial_precoders(stats, dims)
            u = update_u(h, v, dims)
            w = update_w(h, v, u, dims)
            previous = wmmse_objective(h, v, BcdState(u=u, w=w), dims)

            for _ in range(5):
                v = update_v([h], [u], [w], dims)
                steps = [wmmse_objective(h, v, BcdState(u=u, w=w), dims)]
                u = update_u(h, v, dims)
                steps.append(wmmse_objective(h, v, BcdState(u=u, w=w), dims))
                w = update_w(h, v, u, dims)
                steps.append(wmmse_objective(h, v, BcdState(u=u, w=w), dims))
                for value in steps:
                    assert value <= previous + 1e-9 * max(1.0, abs(previous))
                    previous = value

    def test_trace_records_iterations(self, small_dims, scenario):
        result = swmmse_run(scenario, 4, 1, 0, small_dims, record_trace=True)
        assert [row.iteration for row in result.trace] == [1, 2, 3, 4]
        objectives = [row.objective for row in result.trace]
        assert all(b <= a + 1e-9 * abs(a) for a, b in zip(objectives, objectives[1:]))

    def test_iteration_count_contract(self, small_dims, aged):
        with pytest.raises(ValueError):
            swmmse_solve(aged, 0, 4, 0, small_dims)
        precoders = swmmse_solve(aged, 1, 4, 0, small_dims)
        assert precoders.domain == "antenna"
        assert precoders.power == pytest.approx(small_dims.p_max, rel=1e-10)

    def test_same_seed_same_precoders(self, small_dims, aged):
        a = swmmse_solve(aged, 3, 2, 17, small_dims)
        b = swmmse_solve(aged, 3, 2, 17, small_dims)
        assert np.array_equal(a.matrices, b.matrices)

    def test_point_mass_ignores_sample_count(self, small_dims, aged):
        stats = deterministic_stats(aged)
        a = swmmse_solve(stats, 3, 1, 0, small_dims)
        b = swmmse_solve(stats, 3, 4, 9, small_dims)
        assert np.array_equal(a.matrices, b.matrices)

    def test_user_permutation_equivariance(self):
        dims = SystemDims.from_snr(m_t=8, m_r=2, k_users=3, n_sub=12, snr_db=10.0)
        stats = deterministic_stats(stats_for_block(make_scenario(dims, sparsity_b=3, seed=7), 2))
        perm = np.array([1, 2, 0])
        base = swmmse_solve(stats, 4, 1, 0, dims)
        permuted = swmmse_solve(permute_users(stats, perm), 4, 1, 0, dims)
        assert np.linalg.norm(permuted.matrices - base.matrices[perm]) <= 1e-9 * np.linalg.norm(base.matrices)


class TestEwsr:
    def test_point_mass_equals_wsr(self, small_dims, scenario):
        v = swmmse_solve(scenario, 2, 1, 0, small_dims)
        wsr = weighted_sum_rate(to_antenna_domain(scenario.mean), v, small_dims)
        assert ewsr_eval(scenario, v, 1, 0, small_dims) == wsr
        assert ewsr_eval(scenario, v, 64, 3, small_dims) == wsr

    def test_zero_precoders(self, small_dims, aged):
        assert ewsr_eval(aged, PrecoderSet.zeros(2, 8, 2), 16, 0, small_dims) == 0.0

    def test_common_random_numbers(self, small_dims, aged):
        v = swmmse_solve(aged, 2, 2, 0, small_dims)
        assert ewsr_eval(aged, v, 40, 5, small_dims) == ewsr_eval(aged, v, 40, 5, small_dims)
        np.testing.assert_allclose(
            ewsr_samples(aged, v, 40, 5, small_dims)[:8],
            ewsr_samples(aged, v, 8, 5, small_dims),
            rtol=1e-12,
        )

    def test_rejects_zero_draws(self, small_dims, aged):
        v = swmmse_solve(aged, 1, 1, 0, small_dims)
        with pytest.raises(ValueError):
            ewsr_eval(aged, v, 0, 0, small_dims)

    @pytest.mark.slow
    def test_monte_carlo_convergence(self, small_dims, aged):
        v = swmmse_solve(aged, 3, 4, 0, small_dims)
        large = ewsr_samples(aged, v, 20_000, 1, small_dims)
        small = ewsr_samples(aged, v, 2_000, 2, small_dims)
        stderr = np.hypot(large.std() / np.sqrt(large.size), small.std() / np.sqrt(small.size))
        assert abs(large.mean() - small.mean()) <= 3.0 * stderr
