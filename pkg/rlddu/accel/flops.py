"""
RLDDU Flop Accounting
Closed-form complexity model per algorithm and measured multiply-accumulate
counters for the numerical kernels.
"""

from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Literal

import structlog
from pydantic import BaseModel, ConfigDict, Field

from rlddu.core.schemas import SystemDims

logger = structlog.get_logger(__name__)

FlopAlgorithm = Literal["swmmse", "po_wmmse", "du", "rlddu"]


class FlopConstants(BaseModel):
    """Algorithm constants of the complexity model."""
    model_config = ConfigDict(frozen=True)

    b: int = Field(default=10, ge=1, description="Retained beam columns per user (B)")
    q: int = Field(default=30, ge=1, description="Dense rows of the structured B̃ (q)")
    f_tilde: int = Field(default=8, ge=1, description="Sampled subcarriers |F̃|")
    i: int = Field(default=5, ge=1, description="Iterations or layers (I)")
    d: int = Field(default=128, ge=1, description="Fully connected width")
    c: int = Field(default=8, ge=1, description="Convolution channels")
    h: int = Field(default=3, ge=1, description="Convolution kernel size")


class FlopModel(BaseModel):
    """Symbolic and evaluated complexity of one algorithm."""
    model_config = ConfigDict(frozen=True)

    algorithm: FlopAlgorithm
    formula: str
    terms: dict[str, float]

    @property
    def value(self) -> float:
        return float(sum(self.terms.values()))


_FORMULAS: dict[str, str] = {
    "swmmse": "Mt^2*Mr*F*K*I + Mt^3*I",
    "po_wmmse": "B^2*Mr^2*F*K*I + q^2*Mr*K*I + (Mt+q^3)*I",
    "du": "B^2*Mr^2*Ft*K*I + q^2*Mr*K*I + (Mt+q^3)*I",
    "rlddu": "B^2*Mr^2*Ft*K*I + q^2*Mr*K*I + (Mt+q^3)*I + (d+C^2)*H^2*C*B*Mr*Ft*K",
}


def flop_model(dims: SystemDims, algo: str, constants: FlopConstants) -> FlopModel:
    """
    Evaluate the complexity formula of one algorithm with unit leading constants.

    Args:
        dims: System dimensions (M_t, M_r, F, K)
        algo: One of swmmse, po_wmmse, du, rlddu
        constants: B, q, |F̃|, I and the policy architecture constants

    Returns:
        FlopModel with its per-term evaluation

    Raises:
        ValueError: If the algorithm tag is unknown
    """
    mt, mr, f, k = dims.m_t, dims.m_r, dims.n_sub, dims.k_users
    b, q, ft, i = constants.b, constants.q, constants.f_tilde, constants.i

    if algo == "swmmse":
        terms = {"v_update": mt**2 * mr * f * k * i, "inverse": mt**3 * i}
    elif algo in ("po_wmmse", "du", "rlddu"):
        n_sub = f if algo == "po_wmmse" else ft
        terms = {
            "expectations": b**2 * mr**2 * n_sub * k * i,
            "block_terms": q**2 * mr * k * i,
            "structured_inverse": (mt + q**3) * i,
        }
        if algo == "rlddu":
            c, d, h = constants.c, constants.d, constants.h
            terms["policy"] = (d + c**2) * h**2 * c * b * mr * ft * k
    else:
        raise ValueError(f"unknown flop algorithm: {algo}")

    return FlopModel(algorithm=algo, formula=_FORMULAS[algo], terms={key: float(v) for key, v in terms.items()})


def flop_estimate(dims: SystemDims, algo: str, constants: FlopConstants) -> float:
    """Evaluated flop count of one algorithm."""
    return flop_model(dims, algo, constants).value


# ============================================================================
# Measured counters
# ============================================================================

class FlopCounter:
    """Per-task multiply-accumulate accumulator keyed by (module, op)."""

    def __init__(self):
        self.counts: dict[tuple[str, str], int] = {}

    def add(self, module: str, op: str, n: int) -> None:
        key = (module, op)
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def merge(self, other: "FlopCounter") -> None:
        for (module, op), n in sorted(other.counts.items()):
            self.add(module, op, n)

    def total(self, module: str | None = None, op: str | None = None) -> int:
        return sum(
            n for (m, o), n in self.counts.items()
            if (module is None or m == module) and (op is None or o == op)
        )

    def rows(self) -> list[tuple[str, str, int]]:
        return [(m, o, n) for (m, o), n in sorted(self.counts.items())]

    def __repr__(self) -> str:
        return f"FlopCounter(total={self.total()}, ops={len(self.counts)})"


_active_counter: ContextVar[FlopCounter | None] = ContextVar("rlddu_flop_counter", default=None)


@contextmanager
def flop_counter(enabled: bool = True) -> Iterator[FlopCounter]:
    """
    Scope a fresh counter to the current context (thread or task).

    Kernels called inside the block add to the yielded counter; with
    enabled=False they add nothing and the counter stays empty.
    """
    counter = FlopCounter()
    if not enabled:
        yield counter
        return
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)


def count_flops(module: str, op: str, n: int) -> None:
    """Add n multiply-accumulates to the active counter, if any."""
    counter = _active_counter.get()
    if counter is not None:
        counter.add(module, op, n)


def solve_flops(n: int, n_rhs: int) -> int:
    """Cholesky factorization plus two triangular solves."""
    return n**3 // 3 + 2 * n**2 * n_rhs
