"""
RLDDU Bandit Environment
Contextual-bandit view of the unfolded precoder: contexts are channel
statistics at a downlink block, actions are compensation sets plus stopping
coefficients, rewards are EWSR gains over the uncompensated network.
"""

from typing import Any, Protocol, runtime_checkable

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from rlddu.accel.pruning import BeamSupport
from rlddu.channel.model import ChannelStats, make_scenario, stats_for_block
from rlddu.core.errors import DegenerateError
from rlddu.core.schemas import SystemDims
from rlddu.optim.du_core import DuOptions, du_network
from rlddu.optim.swmmse import PrecoderSet, ewsr_eval
from rlddu.policy.actions import ActionLayout, ActionVector, select_depth
from rlddu.policy.features import ContextFeatures, compensation_scale, encode_context

logger = structlog.get_logger(__name__)


def action_layout(dims: SystemDims, options: DuOptions, i_max: int) -> ActionLayout:
    return ActionLayout(k_users=dims.k_users, n_nodes=len(options.nodes(dims)), m_r=dims.m_r, i_max=i_max)


def run_rlddu(
    stats: ChannelStats,
    action: ActionVector,
    dims: SystemDims,
    options: DuOptions | None = None,
) -> PrecoderSet:
    """
    Run the unfolded network with the compensation and depth of an action.

    Compensation matrices are multiplied by the trace normalization τ of the
    context before use. A degenerate network yields zero precoders.

    Args:
        stats: Channel statistics at the current block
        action: Action vector
        dims: System dimensions
        options: Acceleration options

    Returns:
        Power-scaled antenna-domain precoders, or zero precoders flagged degenerate
    """
    options = options or DuOptions()
    layout = action.layout
    comps, beta = layout.decode(action)
    depth = select_depth(beta)
    tau = compensation_scale(stats, dims, options.nodes(dims))
    comps = [comp.scaled(tau) for comp in comps[:depth]]
    try:
        return du_network(stats, dims, depth, options, comps=comps)
    except DegenerateError as e:
        logger.warning("rlddu_degenerate", depth=depth, error=str(e))
        return PrecoderSet.zeros(dims.k_users, dims.m_t, dims.m_r, domain="antenna", degenerate=True)


def baseline_ewsr(
    stats: ChannelStats,
    n_mc: int,
    seed: int,
    dims: SystemDims,
    options: DuOptions,
    i_max: int,
) -> float:
    """EWSR of the uncompensated I_max-layer network."""
    return ewsr_eval(stats, du_network(stats, dims, i_max, options), n_mc, seed, dims)


def reward(
    stats: ChannelStats,
    action: ActionVector,
    n_mc: int,
    seed: int,
    dims: SystemDims,
    options: DuOptions | None = None,
    baseline: float | None = None,
) -> float:
    """
    EWSR of the action's precoders minus the uncompensated I_max-layer EWSR,
    both on the same channel draws.

    Args:
        stats: Channel statistics at the current block
        action: Action vector
        n_mc: Monte Carlo draws
        seed: Common-random-number seed
        dims: System dimensions
        options: Acceleration options
        baseline: Cached baseline EWSR for (stats, n_mc, seed)

    Returns:
        Reward
    """
    options = options or DuOptions()
    if baseline is None:
        baseline = baseline_ewsr(stats, n_mc, seed, dims, options, action.layout.i_max)
    value = ewsr_eval(stats, run_rlddu(stats, action, dims, options), n_mc, seed, dims)
    return value - baseline


@runtime_checkable
class BanditEnvironment(Protocol):
    """One-step environment consumed by train_policy."""

    context_shape: tuple[int, int, int]
    action_dim: int

    def observe(self, rng: np.random.Generator) -> tuple[np.ndarray, Any]:
        """Draw a context; returns (features, opaque state for reward)."""
        ...

    def reward(self, state: Any, action: np.ndarray, rng: np.random.Generator) -> float:
        ...

    def depth_of(self, action: np.ndarray) -> int:
        ...


class PrecodingContext(BaseModel):
    """One cached training context."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    stats: ChannelStats
    support: BeamSupport
    features: ContextFeatures
    baseline: float
    crn_seed: int
    block: int
    scenario_seed: int


class EnvironmentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dims: SystemDims
    options: DuOptions = Field(default_factory=DuOptions)
    i_max: int = Field(default=5, ge=1)
    sparsity_b: int = Field(default=4, ge=1)
    taps: int = 3
    delay_spread: float = 4.0
    init_error: float = 0.0
    aging: tuple[float, ...] | None = None
    blocks: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    pool_size: int = Field(default=32, ge=1)
    reward_mc: int = Field(default=256, ge=1)
    seed: int = 0


class PrecodingEnvironment:
    """
    Pool of (scenario, block) contexts with cached baseline EWSR.

    Context i uses scenario seed (seed, i) and block blocks[i % len(blocks)];
    rewards reuse the context's common-random-number seed.
    """

    def __init__(self, config: EnvironmentConfig):
        self.config = config
        self.dims = config.dims
        self.options = config.options
        self.layout = action_layout(config.dims, config.options, config.i_max)
        self.nodes = config.options.nodes(config.dims)
        self.context_shape = (4, config.dims.k_users, len(self.nodes))
        self.action_dim = self.layout.length
        self._pool: list[PrecodingContext | None] = [None] * config.pool_size
        self.logger = logger.bind(env="precoding", pool_size=config.pool_size)

    def context(self, index: int) -> PrecodingContext:
        """Build (once) and return context index."""
        cached = self._pool[index]
        if cached is not None:
            return cached

        cfg = self.config
        scenario_seed = int(np.random.SeedSequence((cfg.seed, index)).generate_state(1)[0])
        block = cfg.blocks[index % len(cfg.blocks)]
        stats0 = make_scenario(
            self.dims,
            cfg.sparsity_b,
            scenario_seed,
            taps=cfg.taps,
            delay_spread=cfg.delay_spread,
            init_error=cfg.init_error,
            aging=cfg.aging,
        )
        stats = stats_for_block(stats0, block)
        support = self.options.support(stats)
        crn_seed = scenario_seed + 1
        ctx = PrecodingContext(
            stats=stats,
            support=support,
            features=encode_context(stats, support, self.dims, self.nodes),
            baseline=baseline_ewsr(stats, cfg.reward_mc, crn_seed, self.dims, self.options, cfg.i_max),
            crn_seed=crn_seed,
            block=block,
            scenario_seed=scenario_seed,
        )
        self._pool[index] = ctx
        self.logger.debug("context_built", index=index, block=block, baseline=ctx.baseline)
        return ctx

    def observe(self, rng: np.random.Generator) -> tuple[np.ndarray, PrecodingContext]:
        ctx = self.context(int(rng.integers(len(self._pool))))
        return ctx.features.values, ctx

    def reward(self, state: PrecodingContext, action: np.ndarray, rng: np.random.Generator) -> float:
        vector = ActionVector(values=np.asarray(action, dtype=float), layout=self.layout)
        return reward(
            state.stats,
            vector,
            self.config.reward_mc,
            state.crn_seed,
            self.dims,
            self.options,
            baseline=state.baseline,
        )

    def depth_of(self, action: np.ndarray) -> int:
        return select_depth(np.asarray(action)[self.layout.beta_slice])

    def mean_bias(self) -> np.ndarray:
        """Initial policy mean: zero compensation, stopping coefficients rising to I_max."""
        bias = np.zeros(self.action_dim)
        bias[self.layout.beta_slice] = np.linspace(0.0, 1.0, self.layout.i_max)
        return bias
