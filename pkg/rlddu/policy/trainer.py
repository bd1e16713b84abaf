"""
RLDDU Policy Trainer
Score-function (REINFORCE) policy gradient with a running-mean reward
baseline, gradient clipping and a divergence guard.
"""

import math

import numpy as np
import structlog
import torch
from pydantic import BaseModel, ConfigDict, Field
from torch.nn.utils import clip_grad_norm_

from rlddu.policy.environment import BanditEnvironment
from rlddu.policy.network import GaussianPolicy

logger = structlog.get_logger(__name__)


class TrainerOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-3, ge=0)
    batch_size: int = Field(default=1, ge=1)
    grad_clip: float = Field(default=10.0, gt=0)
    baseline_momentum: float = Field(default=0.05, gt=0, le=1)
    reward_bound: float = Field(default=1e6, gt=0, description="Skip steps with larger |reward|")
    grad_bound: float = Field(default=1e8, gt=0, description="Skip steps with larger pre-clip gradient norm")


class TrainingTraceRow(BaseModel):
    episode: int
    reward: float
    depth: int
    grad_norm: float
    skipped: bool


class TrainingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    policy: GaussianPolicy
    trace: list[TrainingTraceRow]

    def improvement(self, fraction: float = 0.1) -> float:
        """Mean reward of the last fraction of episodes minus that of the first."""
        rewards = np.array([row.reward for row in self.trace])
        n = max(1, int(len(rewards) * fraction))
        return float(rewards[-n:].mean() - rewards[:n].mean())


def train_policy(
    env: BanditEnvironment,
    policy: GaussianPolicy,
    episodes: int,
    seed: int,
    options: TrainerOptions | None = None,
) -> TrainingResult:
    """
    Maximize expected reward of a one-step bandit by policy gradient.

    Each update averages -(r - b)·log π(a|s) over batch_size episodes, where b
    is the running-mean reward before the batch. Steps whose reward or gradient
    norm exceed the bounds are skipped and flagged.

    Args:
        env: Bandit environment
        policy: Policy to train in place
        episodes: Number of episodes (≥ 1)
        seed: Seed of the context and action streams
        options: Trainer options

    Returns:
        TrainingResult with the trained policy and one trace row per episode

    Raises:
        ValueError: If episodes < 1
    """
    if episodes < 1:
        raise ValueError(f"episodes must be ≥ 1, got {episodes}")
    options = options or TrainerOptions()

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    generator = torch.Generator().manual_seed(int(rng.integers(2**62)))
    optimizer = torch.optim.Adam(policy.parameters(), lr=options.learning_rate)
    has_depth = hasattr(env, "depth_of")

    baseline: float | None = None
    trace: list[TrainingTraceRow] = []
    policy.train()
    logger.info("training_started", episodes=episodes, seed=seed, action_dim=env.action_dim, lr=options.learning_rate)

    for start in range(0, episodes, options.batch_size):
        batch = range(start, min(start + options.batch_size, episodes))
        optimizer.zero_grad()
        rewards, log_probs, depths = [], [], []
        for _ in batch:
            features, state = env.observe(rng)
            context = torch.as_tensor(np.asarray(features, dtype=np.float64)).unsqueeze(0)
            action, log_prob = policy.sample(context, generator)
            action_np = action[0].numpy()
            rewards.append(float(env.reward(state, action_np, rng)))
            log_probs.append(log_prob[0])
            depths.append(env.depth_of(action_np) if has_depth else 0)

        reference = rewards[0] if baseline is None else baseline
        advantages = torch.tensor([r - reference for r in rewards], dtype=torch.float64)
        loss = -(advantages * torch.stack(log_probs)).mean()
        loss.backward()
        grad_norm = float(clip_grad_norm_(policy.parameters(), options.grad_clip))

        skipped = (
            not all(math.isfinite(r) and abs(r) <= options.reward_bound for r in rewards)
            or not math.isfinite(grad_norm)
            or grad_norm > options.grad_bound
        )
        if skipped:
            logger.warning("episode_skipped", episode=start, rewards=rewards, grad_norm=grad_norm)
        elif options.learning_rate > 0:
            optimizer.step()

        for episode, r, depth in zip(batch, rewards, depths):
            if not skipped:
                baseline = r if baseline is None else baseline + options.baseline_momentum * (r - baseline)
            trace.append(TrainingTraceRow(episode=episode, reward=r, depth=depth, grad_norm=grad_norm, skipped=skipped))

        if (start // options.batch_size) % 50 == 0:
            logger.debug("training_progress", episode=start, baseline=baseline, grad_norm=grad_norm)

    policy.eval()
    result = TrainingResult(policy=policy, trace=trace)
    logger.info("training_completed", episodes=episodes, improvement=result.improvement())
    return result
