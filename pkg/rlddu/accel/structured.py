"""
RLDDU Structured Inverse
Diagonal-plus-block representation of B̃ and its O(q³ + m_t) solve.
"""

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import cho_factor, cho_solve

from rlddu.accel.flops import count_flops, solve_flops
from rlddu.core.errors import DegenerateError
from rlddu.optim.linalg import hermitian_part

logger = structlog.get_logger(__name__)


class StructuredMatrix(BaseModel):
    """
    M = Diag(diag) with the dense Hermitian block written over rows and
    columns block_idx (the block overrides the diagonal on its support).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    diag: np.ndarray = Field(..., description="Diagonal, length m_t")
    block_idx: tuple[int, ...] = Field(default=(), description="Strictly increasing dense rows")
    block: np.ndarray = Field(default_factory=lambda: np.zeros((0, 0), dtype=complex))

    @model_validator(mode="after")
    def check_structure(self) -> "StructuredMatrix":
        q = len(self.block_idx)
        if self.diag.ndim != 1:
            raise ValueError("diag must be a vector")
        if self.block.shape != (q, q):
            raise ValueError(f"block shape {self.block.shape} does not match {q} indices")
        if any(b <= a for a, b in zip(self.block_idx, self.block_idx[1:])):
            raise ValueError("block_idx must be strictly increasing")
        if q and not 0 <= self.block_idx[0] <= self.block_idx[-1] < self.diag.size:
            raise ValueError("block_idx outside the diagonal range")
        if q:
            scale = max(float(np.max(np.abs(self.block))), 1e-300)
            if np.max(np.abs(self.block - self.block.conj().T)) > 1e-10 * scale:
                raise ValueError("block is not Hermitian")
        return self

    @property
    def size(self) -> int:
        return self.diag.size

    @property
    def q(self) -> int:
        return len(self.block_idx)

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag.astype(complex))
        if self.q:
            idx = np.asarray(self.block_idx)
            m[np.ix_(idx, idx)] = self.block
        return m


class StructuredSolve(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    residual: float = Field(..., description="‖M·X − rhs‖/‖rhs‖ against the matrix that was passed in")
    q: int
    fallback: bool = Field(default=False, description="The projection missed the tolerance and a dense solve was used")


def coupling(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-row off-diagonal energy Σ_{j≠i}|b_ij|² and its size relative to the
    diagonal, ‖b_i,off‖ / |b_ii|.
    """
    off = np.abs(b) ** 2
    np.fill_diagonal(off, 0.0)
    energy = off.sum(axis=1)
    diag = np.maximum(np.abs(np.diag(b)), np.finfo(float).tiny)
    return energy, np.sqrt(energy) / diag


def select_q_support(b: np.ndarray, q_cap: int = 30, threshold: float = 0.2) -> tuple[int, ...]:
    """
    Rows carrying significant off-diagonal coupling.

    A row qualifies when its off-diagonal norm is at least threshold times its
    own diagonal entry. Qualifying rows are ranked by off-diagonal energy,
    ties by lower index, and the first q_cap are kept.
    """
    energy, relative = coupling(b)
    if q_cap <= 0 or not np.any(energy):
        return ()
    order = np.argsort(-energy, kind="stable")
    chosen = [int(i) for i in order if relative[i] >= threshold][:q_cap]
    return tuple(sorted(chosen))


def project_structured(b: np.ndarray, block_idx: tuple[int, ...]) -> StructuredMatrix:
    """Keep the diagonal of b and its dense block on block_idx."""
    b = hermitian_part(b)
    idx = np.asarray(block_idx, dtype=int)
    block = b[np.ix_(idx, idx)] if idx.size else np.zeros((0, 0), dtype=complex)
    return StructuredMatrix(diag=np.real(np.diag(b)).copy(), block_idx=tuple(block_idx), block=block)


def structured_inverse(
    m: StructuredMatrix | np.ndarray,
    rhs: np.ndarray,
    q_cap: int = 30,
    threshold: float = 0.2,
    tolerance: float | None = None,
) -> StructuredSolve:
    """
    Solve M·X = rhs with a block Cholesky solve on block_idx and scalar
    division elsewhere.

    A dense Hermitian input is first projected onto its diagonal plus the rows
    chosen by select_q_support; the reported residual is then against the dense
    input. With a tolerance, a projected solve whose residual exceeds it is
    replaced by a dense solve and flagged as a fallback.

    Args:
        m: StructuredMatrix, or a dense Hermitian matrix to project
        rhs: Right-hand side (m_t × r)
        q_cap: Largest block size when projecting
        threshold: Row-selection threshold when projecting
        tolerance: Largest accepted relative residual of a projected solve

    Returns:
        StructuredSolve with solution, residual and block size

    Raises:
        DegenerateError: If a diagonal entry off the block is not positive or the block is not PD
    """
    dense = None
    if isinstance(m, np.ndarray):
        dense = hermitian_part(m)
        m = project_structured(dense, select_q_support(dense, q_cap, threshold))

    n, n_rhs = m.size, rhs.shape[1]
    idx = np.asarray(m.block_idx, dtype=int)
    rest = np.setdiff1d(np.arange(n), idx)
    diag = m.diag[rest]
    if np.any(np.real(diag) <= 0):
        raise DegenerateError("structured_inverse: nonpositive diagonal entry")

    x = np.zeros((n, n_rhs), dtype=complex)
    x[rest] = rhs[rest] / diag[:, None]
    count_flops("accel", "structured_inverse", rest.size * n_rhs)

    if idx.size:
        try:
            factor = cho_factor(m.block, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise DegenerateError(f"structured_inverse: block of size {idx.size} is not positive definite") from e
        x[idx] = cho_solve(factor, rhs[idx], check_finite=False)
        count_flops("accel", "structured_inverse", solve_flops(idx.size, n_rhs))

    reference = dense if dense is not None else m.to_dense()
    residual = relative_residual(reference, x, rhs)
    if dense is None:
        return StructuredSolve(x=x, residual=residual, q=int(idx.size))

    logger.debug("structured_inverse_projected", q=int(idx.size), m_t=n, residual=residual)
    if tolerance is None or residual <= tolerance:
        return StructuredSolve(x=x, residual=residual, q=int(idx.size))

    logger.warning("structured_inverse_fallback", q=int(idx.size), m_t=n, residual=residual, tolerance=tolerance)
    x = dense_solve(dense, rhs)
    return StructuredSolve(x=x, residual=relative_residual(dense, x, rhs), q=int(idx.size), fallback=True)


def relative_residual(b: np.ndarray, x: np.ndarray, rhs: np.ndarray) -> float:
    rhs_norm = np.linalg.norm(rhs)
    return float(np.linalg.norm(b @ x - rhs) / rhs_norm) if rhs_norm > 0 else 0.0


def dense_solve(b: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Dense Hermitian solve of B·X = rhs.

    Raises:
        DegenerateError: If B is not positive definite
    """
    b = hermitian_part(b)
    count_flops("accel", "dense_solve", solve_flops(b.shape[0], rhs.shape[1]))
    try:
        factor = cho_factor(b, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise DegenerateError("dense_solve: matrix is not positive definite") from e
    return cho_solve(factor, rhs, check_finite=False)
