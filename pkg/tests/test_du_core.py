import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import binomtest

from rlddu.accel.interp import sampled_subcarriers
from rlddu.accel.pruning import BeamSupport
from rlddu.accel.structured import StructuredMatrix
from rlddu.channel.model import ChannelStats, deterministic_stats, make_scenario, stats_for_block, to_antenna_domain
from rlddu.core.errors import DegenerateError
from rlddu.core.orchestrator import ExperimentOrchestrator
from rlddu.core.schemas import ExperimentConfig, SystemDims
from rlddu.optim.du_core import (
    ApproxTerms,
    CompensationSet,
    DuOptions,
    LayerInputs,
    approx_terms,
    assemble_btilde,
    du_layer,
    du_network,
    expected_gram,
    expected_outer,
    taylor_diag_inverse,
)
from rlddu.optim.swmmse import (
    PrecoderSet,
    ewsr_eval,
    initial_precoders,
    swmmse_solve,
    update_u,
    update_v,
    update_w,
)
from tests.conftest import permute_users, point_mass_stats, random_mean


def random_beam_precoders(rng: np.random.Generator, dims: SystemDims) -> PrecoderSet:
    shape = (dims.k_users, dims.m_t, dims.m_r)
    return PrecoderSet(matrices=rng.standard_normal(shape) + 1j * rng.standard_normal(shape), domain="beam")


def hermitian_pd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T + n * np.eye(n)


def full_inputs(stats, x_prev, dims, comp=None) -> LayerInputs:
    nodes = sampled_subcarriers(dims.n_sub, dims.n_sub)
    return LayerInputs(
        stats=stats,
        x_prev=x_prev,
        comp=comp or CompensationSet.zeros(dims.k_users, len(nodes), dims.m_r),
        sampled_subcarriers=nodes,
        support=BeamSupport.full(dims.k_users, dims.m_t),
    )


EXACT = DuOptions(f_tilde=12, prune=False, dense_inverse=True)


class TestExpectations:
    def test_zero_variance_is_exact(self):
        rng = np.random.default_rng(0)
        mean = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
        m = hermitian_pd(rng, 2)
        s = hermitian_pd(rng, 5)
        var = np.zeros(mean.shape)
        np.testing.assert_allclose(expected_gram(mean, var, m), mean.conj().T @ m @ mean)
        np.testing.assert_allclose(expected_outer(mean, var, s), mean @ s @ mean.conj().T)

    def test_variance_only_touches_diagonal(self):
        rng = np.random.default_rng(1)
        mean = np.zeros((2, 3), dtype=complex)
        var = np.array([[1.0, 2.0, 0.5], [0.0, 1.0, 3.0]])
        m = np.diag([2.0, 1.0]).astype(complex)
        np.testing.assert_allclose(expected_gram(mean, var, m), np.diag([2.0, 5.0, 4.0]))
        s = hermitian_pd(rng, 3)
        expected = np.diag(var @ np.real(np.diag(s)))
        np.testing.assert_allclose(expected_outer(mean, var, s), expected)

    @pytest.mark.slow
    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(2)
        mean = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        var = rng.uniform(0.2, 1.0, size=(2, 4))
        m = hermitian_pd(rng, 2)
        s = hermitian_pd(rng, 4)

        n = 100_000
        w = (rng.standard_normal((n, 2, 4)) + 1j * rng.standard_normal((n, 2, 4))) / np.sqrt(2.0)
        h = mean + np.sqrt(var) * w
        gram = np.einsum("nrp,rq,nqt->pt", h.conj(), m, h) / n
        outer = np.einsum("nrp,pt,nqt->rq", h, s, h.conj()) / n

        closed_gram = expected_gram(mean, var, m)
        closed_outer = expected_outer(mean, var, s)
        assert np.linalg.norm(gram - closed_gram) <= 0.01 * np.linalg.norm(closed_gram)
        assert np.linalg.norm(outer - closed_outer) <= 0.01 * np.linalg.norm(closed_outer)

    @pytest.mark.slow
    def test_ideal_compensation_oracle(self):
        dims = SystemDims.from_snr(m_t=8, m_r=2, k_users=2, n_sub=12, snr_db=20.0)
        rng = np.random.default_rng(12)
        base = point_mass_stats(random_mean(rng, dims))
        stats = ChannelStats(mean=base.mean, var=np.full(base.mean.shape, 0.01), omega=base.omega, aging=base.aging)
        x = random_beam_precoders(rng, dims)
        zeros = CompensationSet.zeros(dims.k_users, dims.n_sub, dims.m_r)
        uncompensated = full_inputs(stats, x, dims)

        n = 100_000
        compensated_error = uncompensated_error = 0.0
        for k, f in ((0, 0), (1, 0), (0, 6), (1, 6)):
            mean, var = stats.mean[k, f], stats.var[k, f]
            xs = x.matrices
            interference = sum(xs[m] @ xs[m].conj().T for m in range(dims.k_users) if m != k)
            noise = dims.noise_vars[k] / dims.p_max * float(np.sum(np.abs(xs) ** 2))
            c_inv = taylor_diag_inverse(expected_outer(mean, var, interference) + noise * np.eye(dims.m_r))

            w = (rng.standard_normal((n, *mean.shape)) + 1j * rng.standard_normal((n, *mean.shape))) / np.sqrt(2.0)
            h = mean + np.sqrt(var) * w
            c = np.einsum("nrp,pt,nqt->nrq", h, interference, h.conj()) + noise * np.eye(dims.m_r)
            c_samples = np.linalg.inv(c)
            ideal = c_samples.mean(axis=0)
            truth = np.einsum("nrp,nrs,nst->pt", h.conj(), c_samples, h) / n @ xs[k]

            o_e = zeros.o_e.copy()
            o_e[k, f] = ideal - c_inv
            comp = CompensationSet(z_a=zeros.z_a, z_c=zeros.z_c, o_e=o_e, o_f=zeros.o_f, o_g=zeros.o_g)
            e_hat = approx_terms(full_inputs(stats, x, dims, comp), k, f, dims).e_hat

            gram = np.einsum("nrp,rs,nst->pt", h.conj(), 0.5 * (ideal + ideal.conj().T), h) / n @ xs[k]
            assert np.linalg.norm(e_hat - gram) <= 0.01 * np.linalg.norm(gram)

            compensated_error += np.linalg.norm(e_hat - truth)
            uncompensated_error += np.linalg.norm(approx_terms(uncompensated, k, f, dims).e_hat - truth)

        assert compensated_error < uncompensated_error


class TestTaylorInverse:
    def test_exact_on_diagonal_matrices(self):
        d = np.diag([0.5, 2.0, 7.0]).astype(complex)
        np.testing.assert_allclose(taylor_diag_inverse(d), np.diag([2.0, 0.5, 1.0 / 7.0]))
        np.testing.assert_allclose(taylor_diag_inverse(np.eye(4)), np.eye(4))

    def test_first_order_correction(self):
        e = np.array([[2.0, 0.1], [0.1, 3.0]], dtype=complex)
        expected = np.array([[0.5, -1.0 / 60.0], [-1.0 / 60.0, 1.0 / 3.0]])
        np.testing.assert_allclose(taylor_diag_inverse(e), expected, atol=1e-15)

    def test_compensation_is_added(self):
        z = np.array([[0.0, 0.2], [0.2, 0.0]], dtype=complex)
        np.testing.assert_allclose(taylor_diag_inverse(np.eye(2), z), np.eye(2) + z)

    def test_nonpositive_diagonal(self):
        with pytest.raises(DegenerateError):
            taylor_diag_inverse(np.array([[0.0, 1.0], [1.0, 1.0]], dtype=complex))

    def test_congruence_with_positive_diagonal(self):
        rng = np.random.default_rng(13)
        e = hermitian_pd(rng, 4)
        d = np.diag(rng.uniform(0.5, 3.0, size=4))
        d_inv = np.diag(1.0 / np.diag(d))
        expected = d_inv @ taylor_diag_inverse(e) @ d_inv
        np.testing.assert_allclose(taylor_diag_inverse(d @ e @ d), expected, rtol=1e-10, atol=1e-14)

    def test_gap_to_exact_inverse_is_second_order(self):
        rng = np.random.default_rng(14)
        d = np.diag([1.0, 2.0, 3.0]).astype(complex)
        off = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        off = off + off.conj().T
        np.fill_diagonal(off, 0.0)

        def gap(eps):
            e = d + eps * off
            return np.linalg.norm(taylor_diag_inverse(e) - np.linalg.inv(e))

        assert gap(1e-2) / gap(1e-3) == pytest.approx(100.0, rel=0.1)
        assert gap(1e-3) <= 1e-4


class TestCompensationSet:
    def test_zeros(self):
        comp = CompensationSet.zeros(2, 5, 2, layer_index=3)
        assert comp.shape == (2, 5, 2, 2)
        assert comp.is_zero
        assert comp.layer_index == 3

    def test_rejects_non_hermitian(self):
        comp = CompensationSet.zeros(1, 3, 2)
        z_a = comp.z_a.copy()
        z_a[0, 0, 0, 1] = 1.0
        with pytest.raises(ValidationError):
            CompensationSet(z_a=z_a, z_c=comp.z_c, o_e=comp.o_e, o_f=comp.o_f, o_g=comp.o_g)

    def test_scaled(self):
        comp = CompensationSet.zeros(2, 3, 1)
        o_e = np.ones(comp.shape, dtype=complex)
        comp = CompensationSet(z_a=comp.z_a, z_c=comp.z_c, o_e=o_e, o_f=comp.o_f, o_g=comp.o_g)
        tau = np.array([[1.0, 0.0, 2.0], [0.5, 0.5, 0.5]])
        np.testing.assert_allclose(comp.scaled(tau).o_e[..., 0, 0], tau)


class TestLayerInputs:
    def test_interpolation_needs_endpoints(self, small_dims, scenario):
        x = initial_precoders(scenario, small_dims).to_beam()
        with pytest.raises(ValidationError):
            LayerInputs(
                stats=scenario,
                x_prev=x,
                comp=CompensationSet.zeros(2, 3, 2),
                sampled_subcarriers=(1, 5, 11),
                support=BeamSupport.full(2, 8),
            )

    def test_rejects_antenna_domain(self, small_dims, scenario):
        with pytest.raises(ValidationError):
            LayerInputs(
                stats=scenario,
                x_prev=initial_precoders(scenario, small_dims),
                comp=CompensationSet.zeros(2, 3, 2),
                sampled_subcarriers=(0, 6, 11),
                support=BeamSupport.full(2, 8),
            )

    def test_node_weights_sum_to_subcarrier_count(self, small_dims, scenario):
        x = initial_precoders(scenario, small_dims).to_beam()
        inputs = LayerInputs(
            stats=scenario,
            x_prev=x,
            comp=CompensationSet.zeros(2, 5, 2),
            sampled_subcarriers=sampled_subcarriers(12, 5),
            support=BeamSupport.full(2, 8),
        )
        assert inputs.node_weights.sum() == pytest.approx(12.0)


class TestAssembleBtilde:
    def test_single_user_noise_term(self):
        dims = SystemDims(m_t=4, m_r=1, k_users=1, n_sub=12, p_max=2.0, noise_vars=(0.5,), weights=(3.0,))
        term = ApproxTerms(
            e_hat=np.zeros((4, 1), dtype=complex),
            f_hat=np.array([[2.0 + 0.0j]]),
            g_hat=StructuredMatrix(diag=np.zeros(4)),
        )
        b = assemble_btilde([[term]], np.array([12.0]), dims)
        np.testing.assert_allclose(b, 12.0 * 3.0 * 0.5 / 2.0 * 2.0 * np.eye(4))

    def test_block_terms_land_on_support(self):
        dims = SystemDims(m_t=4, m_r=1, k_users=1, n_sub=12, p_max=1.0, noise_vars=(1e-3,), weights=(1.0,))
        block = np.array([[2.0, 0.5], [0.5, 1.0]], dtype=complex)
        term = ApproxTerms(
            e_hat=np.zeros((4, 1), dtype=complex),
            f_hat=np.zeros((1, 1), dtype=complex),
            g_hat=StructuredMatrix(diag=np.zeros(4), block_idx=(1, 3), block=block),
        )
        b = assemble_btilde([[term]], np.array([1.0]), dims)
        np.testing.assert_allclose(b[np.ix_([1, 3], [1, 3])], block)
        assert not np.any(b[0]) and not np.any(b[2])


class TestDuLayer:
    def test_matches_wmmse_update_without_approximation(self):
        dims = SystemDims.from_snr(m_t=4, m_r=1, k_users=2, n_sub=12, snr_db=10.0)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            stats = point_mass_stats(random_mean(rng, dims))
            x = random_beam_precoders(rng, dims)

            layer = du_layer(full_inputs(stats, x, dims), dims, EXACT).to_antenna()

            h = to_antenna_domain(stats.mean)
            v = x.to_antenna()
            u = update_u(h, v, dims)
            w = update_w(h, v, u, dims)
            reference = update_v([h], [u], [w], dims)

            scale = np.linalg.norm(reference.matrices)
            assert np.linalg.norm(layer.matrices - reference.matrices) <= 1e-8 * scale

    def test_zero_precoders_are_degenerate(self, small_dims, scenario):
        x = PrecoderSet.zeros(2, 8, 2, domain="beam")
        result = du_layer(full_inputs(scenario, x, small_dims), small_dims, EXACT)
        assert result.degenerate
        assert result.is_zero

    def test_structured_and_dense_agree_on_full_block(self, small_dims, aged):
        rng = np.random.default_rng(3)
        x = random_beam_precoders(rng, small_dims)
        inputs = full_inputs(aged, x, small_dims)
        dense = du_layer(inputs, small_dims, EXACT)
        structured = du_layer(inputs, small_dims, EXACT.model_copy(update={"dense_inverse": False, "q_threshold": 0.0}))
        np.testing.assert_allclose(structured.matrices, dense.matrices, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("options", [EXACT, DuOptions()], ids=["exact", "default"])
    def test_user_permutation_equivariance(self, options):
        dims = SystemDims.from_snr(m_t=8, m_r=2, k_users=3, n_sub=12, snr_db=10.0)
        stats = stats_for_block(make_scenario(dims, sparsity_b=3, seed=6), 3)
        x = random_beam_precoders(np.random.default_rng(15), dims)
        perm = np.array([2, 0, 1])
        nodes = options.nodes(dims)

        def layer(s, x_prev):
            inputs = LayerInputs(
                stats=s,
                x_prev=x_prev,
                comp=CompensationSet.zeros(dims.k_users, len(nodes), dims.m_r),
                sampled_subcarriers=nodes,
                support=options.support(s),
            )
            return du_layer(inputs, dims, options).matrices

        base = layer(stats, x)
        permuted = layer(permute_users(stats, perm), PrecoderSet(matrices=x.matrices[perm], domain="beam"))
        assert np.linalg.norm(permuted - base[perm]) <= 1e-8 * np.linalg.norm(base)


class TestDuNetwork:
    def test_power_feasible(self, small_dims, aged):
        for options in (DuOptions(), DuOptions(central_only=True), EXACT):
            precoders = du_network(aged, small_dims, 3, options)
            assert precoders.domain == "antenna"
            assert precoders.power == pytest.approx(small_dims.p_max, rel=1e-10)

    def test_zero_compensation_matches_uncompensated(self, small_dims, aged):
        options = DuOptions()
        n_nodes = len(options.nodes(small_dims))
        comps = [CompensationSet.zeros(2, n_nodes, 2, i + 1) for i in range(2)]
        a = du_network(aged, small_dims, 2, options)
        b = du_network(aged, small_dims, 2, options, comps)
        assert np.array_equal(a.matrices, b.matrices)

    def test_depth_contract(self, small_dims, aged):
        with pytest.raises(ValueError):
            du_network(aged, small_dims, 0)
        with pytest.raises(ValueError):
            du_network(aged, small_dims, 2, comps=[CompensationSet.zeros(2, 5, 2)])

    @pytest.mark.slow
    def test_improves_on_matched_filter_under_aging(self, small_dims):
        wins = 0
        for seed in range(20):
            stats = stats_for_block(make_scenario(small_dims, sparsity_b=3, seed=seed), 5)
            du = du_network(stats, small_dims, 3)
            mf = initial_precoders(stats, small_dims)
            wins += ewsr_eval(stats, du, 200, seed, small_dims) > ewsr_eval(stats, mf, 200, seed, small_dims)
        assert binomtest(wins, 20, alternative="greater").pvalue < 0.05

    @pytest.mark.slow
    def test_beats_mean_based_wmmse_under_aging(self, small_dims):
        wins = 0
        for seed in range(20):
            stats = stats_for_block(make_scenario(small_dims, sparsity_b=3, seed=seed), 5)
            du = du_network(stats, small_dims, 5)
            wmmse = swmmse_solve(deterministic_stats(stats), 5, 1, 0, small_dims)
            wins += ewsr_eval(stats, du, 200, seed, small_dims) > ewsr_eval(stats, wmmse, 200, seed, small_dims)
        assert binomtest(wins, 20, alternative="greater").pvalue < 0.05

    @pytest.mark.slow
    def test_desk_defaults_beat_mean_based_wmmse(self, tmp_path):
        config = ExperimentConfig(out_dir=tmp_path)
        dims = config.dims(config.k_users[0], config.snr_db[0])
        options = ExperimentOrchestrator(config).options
        assert options.residual_tol == 0.05 and not options.dense_inverse

        wins = 0
        for seed in range(20):
            stats0 = make_scenario(dims, config.sparsity_b, seed, taps=config.taps, delay_spread=config.delay_spread)
            stats = stats_for_block(stats0, 5)
            du = du_network(stats, dims, config.du_layers, options)
            wmmse = swmmse_solve(deterministic_stats(stats), config.wmmse_iterations, 1, seed, dims)
            wins += ewsr_eval(stats, du, 128, seed, dims) > ewsr_eval(stats, wmmse, 128, seed, dims)
        assert binomtest(wins, 20, alternative="greater").pvalue < 0.05

    @pytest.mark.slow
    def test_structured_inverse_keeps_dense_ewsr_at_reference_scale(self):
        dims = SystemDims.from_snr(m_t=64, m_r=2, k_users=10, n_sub=48, snr_db=20.0)
        for seed in range(3):
            stats = stats_for_block(make_scenario(dims, sparsity_b=10, seed=seed), 3)
            structured = du_network(stats, dims, 5, DuOptions())
            dense = du_network(stats, dims, 5, DuOptions(dense_inverse=True))
            assert ewsr_eval(stats, structured, 64, seed, dims) >= 0.9 * ewsr_eval(stats, dense, 64, seed, dims)
