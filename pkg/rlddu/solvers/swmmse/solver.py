"""
RLDDU SWMMSE Solver
Stochastic wideband WMMSE with sample average approximation. With many
iterations it serves as the upper-bound reference.
"""

from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.optim.swmmse import PrecoderSet, SwmmseResult, SwmmseTraceRow, swmmse_run


class SwmmseSolver(BaseSolver):
    """SWMMSE with a fresh SAA batch per iteration."""

    def __init__(self, iterations: int = 5, saa_batch: int = 4, name: str = "swmmse", record_trace: bool = False):
        super().__init__(
            name=name,
            description=f"Stochastic WMMSE, {iterations} iterations, SAA batch {saa_batch}",
        )
        self.iterations = iterations
        self.saa_batch = saa_batch
        self.record_trace = record_trace
        self.last_trace: list[SwmmseTraceRow] = []

    def run(self, request: SolveRequest, record_trace: bool = False) -> SwmmseResult:
        return swmmse_run(
            request.stats,
            self.iterations,
            self.saa_batch,
            request.seed,
            request.dims,
            record_trace=record_trace,
        )

    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        result = self.run(request, record_trace=self.record_trace)
        # Trace of the most recent solve; empty unless record_trace is set.
        self.last_trace = result.trace
        return result.precoders, float(self.iterations)
