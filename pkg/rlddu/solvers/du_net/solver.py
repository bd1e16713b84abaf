"""
RLDDU DU-Net Solver
Uncompensated deep-unfolded network with pruning, subcarrier interpolation
and the structured B̃ inverse.
"""

from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.optim.du_core import DuOptions, du_network
from rlddu.optim.swmmse import PrecoderSet


class DuNetSolver(BaseSolver):
    """Fixed-depth unfolded network without compensation."""

    def __init__(self, layers: int = 5, options: DuOptions | None = None):
        super().__init__(
            name="du",
            description=f"Uncompensated {layers}-layer unfolded WMMSE",
        )
        self.layers = layers
        self.options = options or DuOptions()

    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        precoders = du_network(request.stats, request.dims, self.layers, self.options)
        return precoders, float(self.layers)
