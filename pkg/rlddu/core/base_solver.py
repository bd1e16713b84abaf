"""
RLDDU Base Solver
Common base class for all precoding solvers with shared infrastructure.
"""

from abc import ABC, abstractmethod
from time import perf_counter

import structlog
from pydantic import BaseModel, ConfigDict, Field

from rlddu.accel.flops import flop_counter
from rlddu.channel.model import ChannelStats
from rlddu.core.schemas import SystemDims
from rlddu.optim.swmmse import PrecoderSet


class SolveRequest(BaseModel):
    """Statistics of one block plus the seed of any solver-internal sampling."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    stats: ChannelStats
    dims: SystemDims
    seed: int = Field(default=0, ge=0)


class SolveResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    precoders: PrecoderSet
    depth: float = Field(..., description="Iterations or layers actually run")
    flops_measured: int | None = None
    wall_time: float = 0.0


class BaseSolver(ABC):
    """
    Abstract base class for precoding solvers.

    Provides:
    - Structured logging with solver context
    - Output type and power validation
    - Optional flop instrumentation
    - Timing and execution counts
    """

    def __init__(self, name: str, description: str, version: str = "1.0.0"):
        """
        Initialize the base solver.

        Args:
            name: Algorithm tag used in reports (e.g. "swmmse")
            description: What this solver does
            version: Solver version for tracking
        """
        self.name = name
        self.description = description
        self.version = version
        self.logger = structlog.get_logger(solver_name=name, solver_version=version)
        self._execution_count = 0
        self._total_execution_time = 0.0

    @abstractmethod
    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        """
        Compute antenna-domain precoders for one block.

        Must be implemented by each solver.

        Returns:
            (precoders, depth)
        """

    def execute(self, request: SolveRequest, instrument: bool = False) -> SolveResult:
        """
        Run solve() with logging, validation, timing and optional flop counting.

        Args:
            request: Statistics, dims and seed
            instrument: Count multiply-accumulates of the numerical kernels

        Returns:
            SolveResult

        Raises:
            ValueError: If the solver returned something other than power-feasible precoders
            Exception: Any error raised by the solver
        """
        start = perf_counter()
        self._execution_count += 1
        self.logger.debug("solver_started", block=request.stats.block, execution_count=self._execution_count)

        try:
            with flop_counter(enabled=instrument) as counter:
                precoders, depth = self.solve(request)

            if not isinstance(precoders, PrecoderSet):
                raise ValueError(f"{self.name} returned {type(precoders).__name__}, expected PrecoderSet")
            if precoders.domain != "antenna":
                raise ValueError(f"{self.name} returned {precoders.domain}-domain precoders")
            p_max = request.dims.p_max
            if not precoders.degenerate and abs(precoders.power - p_max) > 1e-9 * p_max:
                raise ValueError(f"{self.name} output power {precoders.power} differs from P_max {p_max}")

            elapsed = perf_counter() - start
            self._total_execution_time += elapsed
            self.logger.debug(
                "solver_completed",
                block=request.stats.block,
                depth=depth,
                execution_time_seconds=elapsed,
                flops=counter.total() if instrument else None,
                degenerate=precoders.degenerate,
            )
            return SolveResult(
                precoders=precoders,
                depth=float(depth),
                flops_measured=counter.total() if instrument else None,
                wall_time=elapsed,
            )

        except Exception as e:
            self.logger.error(
                "solver_failed",
                block=request.stats.block,
                execution_time_seconds=perf_counter() - start,
                error_type=type(e).__name__,
                error_message=str(e),
            )
            raise

    def get_metadata(self) -> dict:
        """Solver metadata for tracking and debugging."""
        return {
            "name": self.name,
            "description": self.description,
            "version": self.version,
            "execution_count": self._execution_count,
            "total_execution_time": self._total_execution_time,
            "avg_execution_time": (
                self._total_execution_time / self._execution_count
                if self._execution_count > 0
                else 0
            ),
        }

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}("
            f"name='{self.name}', "
            f"version='{self.version}', "
            f"executions={self._execution_count})"
        )
