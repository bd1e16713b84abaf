"""
RLDDU Context Features
Fixed-size energy summary of the channel statistics fed to the policy.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlddu.accel.pruning import BeamSupport
from rlddu.channel.model import ChannelStats
from rlddu.core.schemas import SystemDims

FEATURE_CHANNELS: tuple[str, ...] = ("support_mean_energy", "variance_energy", "aging", "snr_proxy_db10")
ENERGY_FLOOR = 1e-300


class ContextFeatures(BaseModel):
    """Real tensor (channels, K, |F̃|)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="float64 (channels, K, |F̃|)")
    block: int = 0

    @model_validator(mode="after")
    def check_values(self) -> "ContextFeatures":
        if self.values.ndim != 3 or self.values.shape[0] != len(FEATURE_CHANNELS):
            raise ValueError(f"features must be ({len(FEATURE_CHANNELS)}, K, n_nodes), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("features must be finite")
        return self

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)


def channel_energy(stats: ChannelStats, nodes: tuple[int, ...]) -> np.ndarray:
    """Expected channel energy e_{k,f} = ‖H̄‖² + Σ var at each node; shape (K, |nodes|)."""
    idx = list(nodes)
    return np.sum(np.abs(stats.mean[:, idx]) ** 2 + stats.var[:, idx], axis=(2, 3))


def encode_context(
    stats: ChannelStats,
    support: BeamSupport,
    dims: SystemDims,
    nodes: tuple[int, ...],
) -> ContextFeatures:
    """
    Per-(user, sampled subcarrier) features.

    Channels: mean energy on the pruned support as a fraction of the expected
    energy, total variance energy as a fraction of the expected energy, the
    aging coefficient of the current block (1 at block 0), and
    log10(P·e / (σ²·m_r)).

    Args:
        stats: Channel statistics at the current block
        support: Pruned beam support
        dims: System dimensions
        nodes: Sampled subcarriers

    Returns:
        ContextFeatures
    """
    idx = list(nodes)
    mean = stats.mean[:, idx]
    energy = np.maximum(channel_energy(stats, nodes), ENERGY_FLOOR)

    support_energy = np.stack([
        np.sum(np.abs(mean[k][..., support.user(k)]) ** 2, axis=(1, 2)) for k in range(stats.k_users)
    ])
    variance_energy = np.sum(stats.var[:, idx], axis=(2, 3))

    if stats.block == 0:
        aging = np.ones_like(energy)
    else:
        aging = stats.aging[:, idx, stats.block - 1]

    snr = np.log10(dims.p_max * energy / (dims.sigma2[:, None] * dims.m_r))

    values = np.stack([support_energy / energy, variance_energy / energy, aging, snr]).astype(np.float64)
    return ContextFeatures(values=values, block=stats.block)


def compensation_scale(stats: ChannelStats, dims: SystemDims, nodes: tuple[int, ...]) -> np.ndarray:
    """Trace normalization τ_{k,f} = 1/(P·e_{k,f}/m_r + σ_k²) of the compensation matrices."""
    energy = channel_energy(stats, nodes)
    return 1.0 / (dims.p_max * energy / dims.m_r + dims.sigma2[:, None])
