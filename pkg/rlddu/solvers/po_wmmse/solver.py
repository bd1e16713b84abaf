"""
RLDDU PO-WMMSE Solver
Unfolded network evaluated at the central subcarrier only, with its terms
weighted by the subcarrier count and fixed (zero) compensation.
"""

from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.optim.du_core import DuOptions, du_network
from rlddu.optim.swmmse import PrecoderSet


class PoWmmseSolver(BaseSolver):
    def __init__(self, layers: int = 5, options: DuOptions | None = None):
        super().__init__(
            name="po_wmmse",
            description=f"{layers}-layer unfolded WMMSE on the central subcarrier",
        )
        self.layers = layers
        self.options = (options or DuOptions()).model_copy(update={"central_only": True})

    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        precoders = du_network(request.stats, request.dims, self.layers, self.options)
        return precoders, float(self.layers)
