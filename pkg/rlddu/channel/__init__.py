"""Beam-domain channel statistics, aging and sampling"""

from .model import (
    ChannelRealization,
    ChannelStats,
    evolve_stats,
    make_scenario,
    realization_rng,
    sample_channel,
    stats_for_block,
    to_antenna_domain,
    to_beam_domain,
)

__all__ = [
    "ChannelStats",
    "ChannelRealization",
    "make_scenario",
    "evolve_stats",
    "stats_for_block",
    "realization_rng",
    "sample_channel",
    "to_antenna_domain",
    "to_beam_domain",
]
