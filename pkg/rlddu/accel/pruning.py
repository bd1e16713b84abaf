"""
RLDDU Beam Pruning
Per-user dominant beam-column supports.
"""

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlddu.channel.model import ChannelStats

logger = structlog.get_logger(__name__)


class BeamSupport(BaseModel):
    """
    Retained beam columns per user.

    The retained energy reaches the threshold unless the support was capped
    at b_cap, in which case capped is set for that user.
    """
    model_config = ConfigDict(frozen=True)

    indices: tuple[tuple[int, ...], ...] = Field(..., description="Strictly increasing column indices per user")
    retained: tuple[float, ...] = Field(..., description="Retained energy fraction per user")
    threshold: float = Field(..., gt=0, le=1)
    capped: tuple[bool, ...] = Field(..., description="Whether b_cap bound the support size")

    @model_validator(mode="after")
    def check_support(self) -> "BeamSupport":
        if not len(self.indices) == len(self.retained) == len(self.capped):
            raise ValueError("indices, retained and capped need one entry per user")
        for k, idx in enumerate(self.indices):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError(f"support of user {k} is not strictly increasing")
            if not self.capped[k] and self.retained[k] < self.threshold * (1.0 - 1e-12):
                raise ValueError(f"user {k} retains {self.retained[k]:.6f} < {self.threshold}")
        return self

    @classmethod
    def full(cls, k_users: int, m_t: int) -> "BeamSupport":
        return cls(
            indices=(tuple(range(m_t)),) * k_users,
            retained=(1.0,) * k_users,
            threshold=1.0,
            capped=(False,) * k_users,
        )

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(idx) for idx in self.indices)

    def user(self, k: int) -> np.ndarray:
        return np.asarray(self.indices[k], dtype=int)


def column_energy(stats: ChannelStats) -> np.ndarray:
    """‖mean column‖² + Σ var column, summed over subcarriers; shape (K, m_t)."""
    return np.sum(np.abs(stats.mean) ** 2 + stats.var, axis=(1, 2))


def prune_support(stats: ChannelStats, energy_keep: float = 0.99, b_cap: int | None = None) -> BeamSupport:
    """
    Smallest column set per user reaching energy_keep of the user's energy.

    Columns are ranked by energy with ties broken by the lower index; the set
    is capped at b_cap columns.

    Args:
        stats: Channel statistics
        energy_keep: Energy fraction to retain, in (0, 1]
        b_cap: Largest support size (defaults to m_t)

    Returns:
        BeamSupport
    """
    if not 0.0 < energy_keep <= 1.0:
        raise ValueError(f"energy_keep={energy_keep} outside (0, 1]")
    b_cap = stats.m_t if b_cap is None else min(b_cap, stats.m_t)

    energy = column_energy(stats)
    indices, retained, capped = [], [], []
    for k in range(stats.k_users):
        e = energy[k]
        total = float(e.sum())
        if total == 0.0:
            indices.append(())
            retained.append(1.0)
            capped.append(False)
            continue

        order = np.argsort(-e, kind="stable")
        if energy_keep >= 1.0:
            n_keep = int(np.count_nonzero(e))
        else:
            cumulative = np.cumsum(e[order])
            n_keep = int(np.searchsorted(cumulative, energy_keep * total * (1.0 - 1e-12))) + 1
        n_keep = min(n_keep, b_cap)
        keep = np.sort(order[:n_keep])

        fraction = float(e[keep].sum() / total)
        is_capped = fraction < energy_keep * (1.0 - 1e-12)
        if is_capped:
            logger.warning("support_capped", user=k, b_cap=b_cap, retained=fraction, energy_keep=energy_keep)
        indices.append(tuple(int(i) for i in keep))
        retained.append(fraction)
        capped.append(is_capped)

    return BeamSupport(indices=tuple(indices), retained=tuple(retained), threshold=energy_keep, capped=tuple(capped))
