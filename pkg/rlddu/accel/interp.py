"""
RLDDU Subcarrier Interpolation
Second-order Lagrange interpolation of matrix-valued terms across subcarriers,
on a sliding triplet of uniformly sampled nodes.
"""

from collections.abc import Sequence

import numpy as np

from rlddu.accel.flops import count_flops


def sampled_subcarriers(n_sub: int, f_tilde: int) -> tuple[int, ...]:
    """f_tilde uniform subcarrier indices including both endpoints."""
    if not 3 <= f_tilde <= n_sub:
        raise ValueError(f"f_tilde={f_tilde} must lie in [3, n_sub={n_sub}]")
    nodes = np.unique(np.round(np.linspace(0, n_sub - 1, f_tilde)).astype(int))
    return tuple(int(f) for f in nodes)


def lagrange_coefficients(f0: float, f1: float, f2: float, f: float) -> tuple[float, float, float]:
    if f0 == f1 or f1 == f2 or f0 == f2:
        raise ValueError(f"duplicate interpolation nodes ({f0}, {f1}, {f2})")
    l0 = (f - f1) * (f - f2) / ((f0 - f1) * (f0 - f2))
    l1 = (f - f0) * (f - f2) / ((f1 - f0) * (f1 - f2))
    l2 = (f - f0) * (f - f1) / ((f2 - f0) * (f2 - f1))
    return l0, l1, l2


def lagrange_interp3(nodes: Sequence[tuple[float, np.ndarray]], f: float) -> np.ndarray:
    """
    l0·M0 + l1·M1 + l2·M2 for nodes (f0, M0), (f1, M1), (f2, M2).

    Raises:
        ValueError: If the nodes are not three increasing distinct points or f lies outside [f0, f2]
    """
    if len(nodes) != 3:
        raise ValueError(f"expected three nodes, got {len(nodes)}")
    (f0, m0), (f1, m1), (f2, m2) = nodes
    l0, l1, l2 = lagrange_coefficients(f0, f1, f2, f)
    if not f0 < f1 < f2:
        raise ValueError("interpolation nodes must be increasing")
    if not f0 <= f <= f2:
        raise ValueError(f"target {f} outside [{f0}, {f2}]")
    count_flops("accel", "lagrange_interp3", 3 * np.size(m0))
    return l0 * m0 + l1 * m1 + l2 * m2


def triplet_start(f: float, nodes: Sequence[int]) -> int:
    """Index j of the node triplet (j, j+1, j+2) nearest to f."""
    nodes = np.asarray(nodes)
    if nodes.size < 3:
        raise ValueError("need at least three nodes")
    centre = int(np.argmin(np.abs(nodes - f)))
    return int(np.clip(centre - 1, 0, nodes.size - 3))


def interpolation_matrix(n_sub: int, nodes: Sequence[int]) -> np.ndarray:
    """
    Weights L (n_sub × |nodes|) with value_f = Σ_j L[f, j]·value_{nodes[j]}.

    Node rows are unit vectors; every row sums to one.
    """
    nodes = tuple(int(f) for f in nodes)
    if nodes[0] != 0 or nodes[-1] != n_sub - 1:
        raise ValueError("interpolation nodes must include both endpoints")
    weights = np.zeros((n_sub, len(nodes)))
    for f in range(n_sub):
        if f in nodes:
            weights[f, nodes.index(f)] = 1.0
            continue
        j = triplet_start(f, nodes)
        weights[f, j:j + 3] = lagrange_coefficients(nodes[j], nodes[j + 1], nodes[j + 2], f)
    return weights


def interpolate(values: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Expand node values (|nodes|, ...) to all subcarriers (n_sub, ...)."""
    return np.tensordot(matrix, values, axes=(1, 0))
