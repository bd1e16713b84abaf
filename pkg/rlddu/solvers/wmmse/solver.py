"""
RLDDU WMMSE Solver
Non-robust wideband WMMSE: the posterior mean is treated as exact CSI.
"""

from rlddu.channel.model import deterministic_stats
from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.optim.swmmse import PrecoderSet, swmmse_solve


class WmmseSolver(BaseSolver):
    """Deterministic WMMSE on the posterior-mean channel."""

    def __init__(self, iterations: int = 5):
        super().__init__(
            name="wmmse",
            description="Wideband WMMSE on the posterior mean channel",
        )
        self.iterations = iterations

    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        stats = deterministic_stats(request.stats)
        precoders = swmmse_solve(stats, self.iterations, 1, request.seed, request.dims)
        return precoders, float(self.iterations)
