"""
RLDDU Channel Model
Posterior beam-domain channel statistics: synthetic scenarios, Gauss-Markov
aging across downlink blocks, realization sampling and the beam/antenna
domain map.
"""

from functools import lru_cache
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import dft

from rlddu.core.errors import ShapeError
from rlddu.core.schemas import DEFAULT_AGING, SystemDims

logger = structlog.get_logger(__name__)

N_FFT = 2048
LEAKAGE_DB = -50.0
STATS_FORMAT_VERSION = 1


class ChannelStats(BaseModel):
    """
    Posterior statistics of the beam-domain channel at one block.

    Arrays are indexed (user, subcarrier, receive antenna, beam column);
    aging is indexed (user, subcarrier, block - 1).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray = Field(..., description="Posterior mean H̄ᵇ, complex (K, F, m_r, m_t)")
    var: np.ndarray = Field(..., description="Element-wise error variance ΔHᵇ, real (K, F, m_r, m_t)")
    omega: np.ndarray = Field(..., description="Steady-state element variance Ω, real (K, F, m_r, m_t)")
    aging: np.ndarray = Field(..., description="Aging coefficients β, real (K, F, n_blocks)")
    block: int = Field(default=0, ge=0, description="Block index these statistics describe")

    @model_validator(mode="after")
    def check_arrays(self) -> "ChannelStats":
        if self.mean.ndim != 4:
            raise ValueError(f"mean must be 4-D (K, F, m_r, m_t), got shape {self.mean.shape}")
        for name in ("var", "omega"):
            arr = getattr(self, name)
            if arr.shape != self.mean.shape:
                raise ValueError(f"{name} shape {arr.shape} differs from mean shape {self.mean.shape}")
            if np.iscomplexobj(arr):
                raise ValueError(f"{name} must be real")
            if np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.aging.ndim != 3 or self.aging.shape[:2] != self.mean.shape[:2]:
            raise ValueError(f"aging shape {self.aging.shape} inconsistent with mean {self.mean.shape}")
        if np.any(self.aging <= 0) or np.any(self.aging >= 1):
            raise ValueError("aging coefficients must lie in (0, 1)")
        if self.block > self.aging.shape[2]:
            raise ValueError(f"block {self.block} beyond {self.aging.shape[2]} blocks")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.var))):
            raise ValueError("channel statistics must be finite")
        return self

    @property
    def k_users(self) -> int:
        return self.mean.shape[0]

    @property
    def n_sub(self) -> int:
        return self.mean.shape[1]

    @property
    def m_r(self) -> int:
        return self.mean.shape[2]

    @property
    def m_t(self) -> int:
        return self.mean.shape[3]

    @property
    def n_blocks(self) -> int:
        return self.aging.shape[2]

    def check_dims(self, dims: SystemDims) -> None:
        expected = (dims.k_users, dims.n_sub, dims.m_r, dims.m_t)
        if self.mean.shape != expected:
            raise ShapeError(f"stats shape {self.mean.shape} does not match dims {expected}")


class ChannelRealization(BaseModel):
    """One beam-domain channel draw for all users and subcarriers."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h_beam: np.ndarray = Field(..., description="Complex (K, F, m_r, m_t)")

    @model_validator(mode="after")
    def check_finite(self) -> "ChannelRealization":
        if self.h_beam.ndim != 4:
            raise ValueError(f"h_beam must be 4-D, got shape {self.h_beam.shape}")
        if not np.all(np.isfinite(self.h_beam)):
            raise ValueError("channel realization has non-finite entries")
        return self


def make_scenario(
    dims: SystemDims,
    sparsity_b: int,
    seed: int,
    taps: int = 3,
    delay_spread: float = 4.0,
    init_error: float = 0.0,
    aging: tuple[float, ...] | None = None,
) -> ChannelStats:
    """
    Synthesize block-0 statistics of a sparse, frequency-smooth channel.

    Each user gets sparsity_b beam columns drawn without replacement. Tap
    gains with an exponential power-delay profile and delays of at most
    delay_spread samples (out of N_FFT) give a band-limited frequency
    response. Columns off the support leak at LEAKAGE_DB.

    Args:
        dims: System dimensions
        sparsity_b: Dominant beam columns per user
        seed: Scenario seed
        taps: Number of delay taps
        delay_spread: Largest tap delay in samples
        init_error: Block-0 error variance as a fraction of Ω
        aging: Aging coefficient per block (uniform across users and subcarriers)

    Returns:
        Block-0 ChannelStats

    Raises:
        ValueError: If sparsity_b or the aging schedule is out of range
    """
    if not 1 <= sparsity_b <= dims.m_t:
        raise ValueError(f"sparsity_b={sparsity_b} outside [1, {dims.m_t}]")
    if aging is None:
        aging = DEFAULT_AGING if dims.n_blocks == len(DEFAULT_AGING) else None
    if aging is None or len(aging) != dims.n_blocks:
        raise ValueError(f"aging schedule needs {dims.n_blocks} coefficients")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    k_users, n_sub, m_r, m_t = dims.k_users, dims.n_sub, dims.m_r, dims.m_t

    delays = np.linspace(0.0, delay_spread, taps)
    pdp = np.exp(-np.arange(taps, dtype=float))
    pdp /= pdp.sum()
    phases = np.exp(-2j * np.pi * np.outer(np.arange(n_sub), delays) / N_FFT)

    leak = 10.0 ** (LEAKAGE_DB / 10.0)
    mean = np.zeros((k_users, n_sub, m_r, m_t), dtype=complex)
    omega = np.zeros((k_users, n_sub, m_r, m_t))
    for k in range(k_users):
        support = rng.choice(m_t, size=sparsity_b, replace=False)
        col_power = 0.2 + rng.exponential(1.0, size=sparsity_b)
        profile = np.full(m_t, leak * col_power.mean())
        profile[support] = col_power
        profile *= m_t / profile.sum()

        gains = (rng.standard_normal((taps, m_r, m_t)) + 1j * rng.standard_normal((taps, m_r, m_t))) / np.sqrt(2)
        gains *= np.sqrt(pdp[:, None, None] * profile[None, None, :])
        mean[k] = np.einsum("fl,lrt->frt", phases, gains)
        omega[k] = np.broadcast_to(profile, (n_sub, m_r, m_t))

    aging_arr = np.broadcast_to(np.asarray(aging, dtype=float), (k_users, n_sub, dims.n_blocks)).copy()
    stats = ChannelStats(mean=mean, var=init_error * omega, omega=omega, aging=aging_arr, block=0)

    logger.debug("scenario_created", seed=seed, sparsity_b=sparsity_b, k_users=k_users, n_sub=n_sub, m_t=m_t)
    return stats


def gauss_markov_update(
    mean0: np.ndarray,
    var0: np.ndarray,
    omega: np.ndarray,
    beta: np.ndarray | float,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mean, var) after aging by beta; beta in [0, 1] element-wise."""
    beta = np.asarray(beta, dtype=float)
    beta2 = beta * beta
    return beta * mean0, beta2 * var0 + (1.0 - beta2) * omega


def evolve_stats(stats0: ChannelStats, block_index: int) -> ChannelStats:
    """
    Age block-0 statistics to downlink block n.

    Args:
        stats0: Block-0 statistics
        block_index: Target block n, 1 ≤ n ≤ n_blocks

    Returns:
        ChannelStats of block n

    Raises:
        ValueError: If block_index is out of range or stats0 is not block 0
    """
    if stats0.block != 0:
        raise ValueError(f"evolve_stats expects block-0 statistics, got block {stats0.block}")
    if not 1 <= block_index <= stats0.n_blocks:
        raise ValueError(f"block index {block_index} outside [1, {stats0.n_blocks}]")

    beta = stats0.aging[:, :, block_index - 1][:, :, None, None]
    mean, var = gauss_markov_update(stats0.mean, stats0.var, stats0.omega, beta)
    return ChannelStats(mean=mean, var=var, omega=stats0.omega, aging=stats0.aging, block=block_index)


def stats_for_block(stats0: ChannelStats, block_index: int) -> ChannelStats:
    """Block-0 statistics unchanged, later blocks aged."""
    return stats0 if block_index == 0 else evolve_stats(stats0, block_index)


def deterministic_stats(stats: ChannelStats) -> ChannelStats:
    """Copy with zero error variance (the posterior mean treated as exact CSI)."""
    return stats.model_copy(update={"var": np.zeros_like(stats.var)})


def realization_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Generator for one channel draw; the same (seed, index) always yields the same draw."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sample_index,)))


def sample_channel(stats: ChannelStats, rng: np.random.Generator) -> ChannelRealization:
    """Draw mean + sqrt(var)·w with w circularly-symmetric unit complex Gaussian, entries independent."""
    shape = stats.mean.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelRealization(h_beam=stats.mean + np.sqrt(stats.var) * noise)


@lru_cache(maxsize=16)
def _dft(m_t: int) -> np.ndarray:
    phi = dft(m_t, scale="sqrtn")
    phi.setflags(write=False)
    return phi


def dft_matrix(m_t: int) -> np.ndarray:
    """Unitary normalized DFT matrix Φ of size m_t (read-only)."""
    return _dft(int(m_t))


def to_antenna_domain(h_beam: ChannelRealization | np.ndarray, m_t: int | None = None) -> np.ndarray:
    """
    Map beam-domain rows to the antenna domain, H = Hᵇ·Φ.

    Raises:
        ShapeError: If the trailing dimension differs from m_t
    """
    h = h_beam.h_beam if isinstance(h_beam, ChannelRealization) else np.asarray(h_beam)
    if h.ndim < 2:
        raise ShapeError(f"expected a matrix or stack of matrices, got shape {h.shape}")
    if m_t is not None and h.shape[-1] != m_t:
        raise ShapeError(f"channel has {h.shape[-1]} columns, expected m_t={m_t}")
    return h @ dft_matrix(h.shape[-1])


def to_beam_domain(h: np.ndarray, m_t: int | None = None) -> np.ndarray:
    """Inverse of to_antenna_domain, Hᵇ = H·Φᴴ."""
    h = np.asarray(h)
    if m_t is not None and h.shape[-1] != m_t:
        raise ShapeError(f"channel has {h.shape[-1]} columns, expected m_t={m_t}")
    return h @ dft_matrix(h.shape[-1]).conj().T


def save_stats(stats: ChannelStats, path: Path | str) -> Path:
    """Write stats to a compressed .npz archive."""
    path = Path(path)
    np.savez_compressed(
        path,
        format_version=np.int64(STATS_FORMAT_VERSION),
        mean=stats.mean,
        var=stats.var,
        omega=stats.omega,
        aging=stats.aging,
        block=np.int64(stats.block),
    )
    return path


def load_stats(path: Path | str) -> ChannelStats:
    """Read stats written by save_stats."""
    with np.load(Path(path)) as data:
        version = int(data["format_version"])
        if version != STATS_FORMAT_VERSION:
            raise ValueError(f"unsupported stats format version {version}")
        return ChannelStats(
            mean=data["mean"],
            var=data["var"],
            omega=data["omega"],
            aging=data["aging"],
            block=int(data["block"]),
        )
