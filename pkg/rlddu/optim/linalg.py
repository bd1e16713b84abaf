"""
RLDDU Hermitian Linear Algebra
Shared helpers for Hermitian symmetrization and positive-definite solves
with a ridge fallback.
"""

import numpy as np
import structlog
from scipy.linalg import cho_factor, cho_solve

from rlddu.accel.flops import count_flops, solve_flops
from rlddu.core.errors import DegenerateError

logger = structlog.get_logger(__name__)

RIDGE = 1e-12


def herm(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    """(A + Aᴴ)/2 over the last two axes."""
    return 0.5 * (a + herm(a))


def real_trace(a: np.ndarray) -> np.ndarray:
    return np.real(np.trace(a, axis1=-2, axis2=-1))


def hermitian_solve(
    a: np.ndarray,
    b: np.ndarray,
    *,
    module: str,
    op: str,
) -> tuple[np.ndarray, int]:
    """
    Solve A·X = B for Hermitian positive definite A (single or batched).

    A is symmetrized first. If the Cholesky factorization fails, A + 1e-12·I
    is solved instead and the activation is logged.

    Args:
        a: Hermitian matrix (n × n) or stack (..., n, n)
        b: Right-hand side (n × r) or stack (..., n, r)
        module: Module name for flop accounting and logs
        op: Operation name for flop accounting and logs

    Returns:
        (solution, number of ridge activations)

    Raises:
        DegenerateError: If the ridged system is still singular
    """
    a = hermitian_part(a)
    n = a.shape[-1]
    batch = int(np.prod(a.shape[:-2], dtype=int))
    count_flops(module, op, batch * solve_flops(n, b.shape[-1]))

    try:
        if a.ndim == 2:
            factor = cho_factor(a, lower=True, check_finite=False)
            return cho_solve(factor, b, check_finite=False), 0
        np.linalg.cholesky(a)
        return np.linalg.solve(a, b), 0
    except np.linalg.LinAlgError:
        pass

    logger.warning("ridge_fallback", module=module, op=op, ridge=RIDGE, batch=batch)
    try:
        return np.linalg.solve(a + RIDGE * np.eye(n), b), batch
    except np.linalg.LinAlgError as e:
        raise DegenerateError(f"{module}.{op}: singular system even after {RIDGE:g} ridge") from e
