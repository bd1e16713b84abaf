"""Shared fixtures: small system dimensions and synthetic scenarios."""

import numpy as np
import pytest

from rlddu.channel.model import ChannelStats, make_scenario, stats_for_block
from rlddu.core.schemas import DEFAULT_AGING, SystemDims


@pytest.fixture
def small_dims() -> SystemDims:
    return SystemDims.from_snr(m_t=8, m_r=2, k_users=2, n_sub=12, snr_db=10.0)


@pytest.fixture
def scenario(small_dims) -> ChannelStats:
    return make_scenario(small_dims, sparsity_b=3, seed=11)


@pytest.fixture
def aged(scenario) -> ChannelStats:
    """Statistics at block 3 (aging 0.84)."""
    return stats_for_block(scenario, 3)


def point_mass_stats(mean: np.ndarray, n_blocks: int = 6) -> ChannelStats:
    """Statistics with zero error variance around the given (K, F, m_r, m_t) mean."""
    k_users, n_sub = mean.shape[:2]
    aging = np.broadcast_to(np.asarray(DEFAULT_AGING[:n_blocks]), (k_users, n_sub, n_blocks)).copy()
    return ChannelStats(
        mean=mean.astype(complex),
        var=np.zeros(mean.shape),
        omega=np.ones(mean.shape),
        aging=aging,
    )


def random_mean(rng: np.random.Generator, dims: SystemDims) -> np.ndarray:
    shape = (dims.k_users, dims.n_sub, dims.m_r, dims.m_t)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def permute_users(stats: ChannelStats, perm: np.ndarray) -> ChannelStats:
    """The same statistics with users reordered so that user i is old user perm[i]."""
    return ChannelStats(
        mean=stats.mean[perm],
        var=stats.var[perm],
        omega=stats.omega[perm],
        aging=stats.aging[perm],
        block=stats.block,
    )
