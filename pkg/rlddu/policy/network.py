"""
RLDDU Policy Network
Gaussian policy over action vectors: convolutional mean and log-std heads,
per-layer trainable action scales, sampling and checkpoints.
"""

import math
from pathlib import Path
from typing import Any

import numpy as np
import structlog
import torch
from torch import nn
from torch.distributions import Normal

from rlddu.core.errors import ConfigError

logger = structlog.get_logger(__name__)

LOGSTD_MIN = -5.0
LOGSTD_MAX = 2.0
CHECKPOINT_FORMAT = "rlddu-policy"
CHECKPOINT_VERSION = 1


class ConvHead(nn.Module):
    """Two convolution stages then two fully connected stages."""

    def __init__(self, context_shape: tuple[int, int, int], out_dim: int, channels: int = 8, kernel: int = 3, width: int = 128):
        super().__init__()
        in_channels, height, breadth = context_shape
        padding = kernel // 2
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, channels, kernel, stride=1, padding=padding),
            nn.ReLU(),
            nn.Conv2d(channels, channels, kernel, stride=1, padding=padding),
            nn.ReLU(),
            nn.Flatten(),
        )
        self.hidden = nn.Sequential(nn.Linear(channels * height * breadth, width), nn.ReLU())
        self.out = nn.Linear(width, out_dim)

    def forward(self, context: torch.Tensor) -> torch.Tensor:
        return self.out(self.hidden(self.features(context)))


class GaussianPolicy(nn.Module):
    """
    Diagonal Gaussian policy a ~ N(μ(s), exp(logstd(s))²).

    Entries in scale group g have mean and std multiplied by exp(log_scales[g]);
    entries in group -1 are unscaled. The effective logstd is clamped to
    [LOGSTD_MIN, LOGSTD_MAX] after scaling. The log-density is that of the
    scaled Gaussian.
    """

    def __init__(
        self,
        context_shape: tuple[int, int, int],
        action_dim: int,
        n_groups: int = 0,
        scale_groups: np.ndarray | None = None,
        init_scale: float = 0.01,
        mean_bias: np.ndarray | None = None,
        init_logstd: float = 0.0,
        channels: int = 8,
        kernel: int = 3,
        width: int = 128,
    ):
        super().__init__()
        self.architecture = {
            "context_shape": list(context_shape),
            "action_dim": int(action_dim),
            "n_groups": int(n_groups),
            "channels": int(channels),
            "kernel": int(kernel),
            "width": int(width),
        }
        self.f_mean = ConvHead(context_shape, action_dim, channels, kernel, width)
        self.f_logstd = ConvHead(context_shape, action_dim, channels, kernel, width)
        self.double()

        with torch.no_grad():
            self.f_mean.out.weight.mul_(0.01)
            self.f_mean.out.bias.zero_()
            if mean_bias is not None:
                self.f_mean.out.bias.copy_(torch.as_tensor(mean_bias, dtype=torch.float64))
            self.f_logstd.out.weight.mul_(0.01)
            self.f_logstd.out.bias.fill_(init_logstd)

        groups = np.full(action_dim, -1) if scale_groups is None else np.asarray(scale_groups)
        if groups.shape != (action_dim,) or groups.max(initial=-1) >= n_groups:
            raise ValueError("scale_groups must give a group in [-1, n_groups) for every action entry")
        self.register_buffer("scale_groups", torch.as_tensor(groups, dtype=torch.long))
        self.log_scales = nn.Parameter(torch.full((n_groups,), math.log(init_scale), dtype=torch.float64))

    def _log_scale(self) -> torch.Tensor:
        padded = torch.cat([self.log_scales, torch.zeros(1, dtype=torch.float64)])
        return padded[self.scale_groups]

    def forward(self, context: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Effective (mean, logstd) for a batch of contexts (N, C, H, W)."""
        log_scale = self._log_scale()
        mean = self.f_mean(context) * torch.exp(log_scale)
        logstd = torch.clamp(self.f_logstd(context) + log_scale, LOGSTD_MIN, LOGSTD_MAX)
        return mean, logstd

    def distribution(self, context: torch.Tensor) -> Normal:
        mean, logstd = self(context)
        return Normal(mean, torch.exp(logstd))

    def sample(self, context: torch.Tensor, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
        """Draw actions; returns (detached action, log-density with gradient)."""
        mean, logstd = self(context)
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        action = (mean + torch.exp(logstd) * noise).detach()
        log_prob = Normal(mean, torch.exp(logstd)).log_prob(action).sum(dim=-1)
        return action, log_prob


def as_context_tensor(context) -> torch.Tensor:
    """ContextFeatures or array (C, H, W) -> float64 tensor (1, C, H, W)."""
    values = getattr(context, "values", context)
    return torch.as_tensor(np.asarray(values, dtype=np.float64)).unsqueeze(0)


def policy_sample(policy: GaussianPolicy, context, generator: torch.Generator) -> tuple[np.ndarray, float]:
    """
    Sample one action and its exact log-density.

    Args:
        policy: Gaussian policy
        context: ContextFeatures or (C, H, W) array
        generator: Torch generator owning the sampling stream

    Returns:
        (action vector, log-density)
    """
    with torch.no_grad():
        action, log_prob = policy.sample(as_context_tensor(context), generator)
    return action[0].numpy().copy(), float(log_prob[0])


def policy_mean(policy: GaussianPolicy, context) -> np.ndarray:
    """Deterministic (mean) action used for evaluation."""
    with torch.no_grad():
        mean, _ = policy(as_context_tensor(context))
    return mean[0].numpy().copy()


def save_policy(policy: GaussianPolicy, path: Path | str, header: dict[str, Any]) -> Path:
    """Write {format, version, header, state_dict} with torch.save."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "header": {**header, "architecture": policy.architecture},
        "state_dict": policy.state_dict(),
    }
    torch.save(payload, path)
    logger.info("policy_saved", path=str(path), action_dim=policy.architecture["action_dim"])
    return path


def load_policy(path: Path | str, expected: dict[str, Any] | None = None) -> tuple[GaussianPolicy, dict[str, Any]]:
    """
    Read a checkpoint written by save_policy.

    Args:
        path: Checkpoint path
        expected: Header entries that must match (dims, f_tilde, i_max, ...)

    Returns:
        (policy, header)

    Raises:
        ConfigError: If the file is missing, malformed or does not match expected
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"policy checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path} is not a version {CHECKPOINT_VERSION} policy checkpoint")

    header = payload["header"]
    for key, value in (expected or {}).items():
        if header.get(key) != value:
            raise ConfigError(f"checkpoint {key}={header.get(key)!r} does not match {value!r}")

    arch = header["architecture"]
    policy = GaussianPolicy(
        context_shape=tuple(arch["context_shape"]),
        action_dim=arch["action_dim"],
        n_groups=arch["n_groups"],
        channels=arch["channels"],
        kernel=arch["kernel"],
        width=arch["width"],
    )
    policy.load_state_dict(payload["state_dict"])
    policy.eval()
    return policy, header
