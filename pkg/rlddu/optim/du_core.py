"""
RLDDU Deep-Unfolding Core
One unfolded WMMSE layer in the beam domain: closed-form channel
expectations, diagonal Taylor inverses, compensated terms Ê/F̂/Ĝ and the
X-update through the structured B̃ inverse.
"""

from collections.abc import Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlddu.accel.flops import count_flops
from rlddu.accel.interp import interpolation_matrix, sampled_subcarriers
from rlddu.accel.pruning import BeamSupport, prune_support
from rlddu.accel.structured import StructuredMatrix, dense_solve, structured_inverse
from rlddu.channel.model import ChannelStats
from rlddu.core.errors import DegenerateError, ShapeError
from rlddu.core.schemas import SystemDims
from rlddu.optim.linalg import herm, hermitian_part, real_trace
from rlddu.optim.swmmse import PrecoderSet, matched_filter_init, scale_to_power

logger = structlog.get_logger(__name__)

DIAG_FLOOR = 1e-12

COMPENSATION_FIELDS: tuple[str, ...] = ("z_a", "z_c", "o_e", "o_f", "o_g")
HERMITIAN_FIELDS: tuple[str, ...] = ("z_a", "z_c")


# ============================================================================
# Types
# ============================================================================

class CompensationSet(BaseModel):
    """
    Per-layer compensation matrices, each of shape (K, |F̃|, m_r, m_r).

    z_a and z_c correct the Taylor inverses of E[A] and E[C]; o_e, o_f and
    o_g replace the cross terms of Ê, F̂ and Ĝ. All zeros means no compensation.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    z_a: np.ndarray
    z_c: np.ndarray
    o_e: np.ndarray
    o_f: np.ndarray
    o_g: np.ndarray
    layer_index: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_matrices(self) -> "CompensationSet":
        shape = self.z_a.shape
        if len(shape) != 4 or shape[-1] != shape[-2]:
            raise ValueError(f"compensation matrices must be (K, n_nodes, m_r, m_r), got {shape}")
        for name in COMPENSATION_FIELDS:
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} shape {arr.shape} differs from {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        for name in HERMITIAN_FIELDS:
            arr = getattr(self, name)
            scale = max(float(np.max(np.abs(arr), initial=0.0)), 1.0)
            if np.max(np.abs(arr - herm(arr)), initial=0.0) > 1e-10 * scale:
                raise ValueError(f"{name} is not Hermitian")
        return self

    @classmethod
    def zeros(cls, k_users: int, n_nodes: int, m_r: int, layer_index: int = 1) -> "CompensationSet":
        arrays = {name: np.zeros((k_users, n_nodes, m_r, m_r), dtype=complex) for name in COMPENSATION_FIELDS}
        return cls(**arrays, layer_index=layer_index)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.z_a.shape

    @property
    def is_zero(self) -> bool:
        return not any(np.any(getattr(self, name)) for name in COMPENSATION_FIELDS)

    def scaled(self, tau: np.ndarray) -> "CompensationSet":
        """Multiply every matrix at (k, j) by tau[k, j]."""
        t = np.asarray(tau, dtype=float)[:, :, None, None]
        return CompensationSet(
            **{name: t * getattr(self, name) for name in COMPENSATION_FIELDS},
            layer_index=self.layer_index,
        )


class DuOptions(BaseModel):
    """Acceleration options of the unfolded network."""
    model_config = ConfigDict(frozen=True)

    f_tilde: int = Field(default=5, ge=3, description="Sampled subcarriers |F̃|")
    energy_keep: float = Field(default=0.99, gt=0, le=1)
    b_cap: int | None = Field(default=None, ge=1)
    prune: bool = True
    q_cap: int = Field(default=30, ge=0)
    q_threshold: float = Field(default=0.2, ge=0)
    residual_tol: float | None = Field(default=0.05, gt=0, description="Dense fallback above this structured-solve residual")
    dense_inverse: bool = Field(default=False, description="Solve B̃ densely instead of the structured projection")
    central_only: bool = Field(default=False, description="Evaluate terms at the central subcarrier, weighted by |F|")

    def nodes(self, dims: SystemDims) -> tuple[int, ...]:
        if self.central_only:
            return (dims.central_subcarrier,)
        return sampled_subcarriers(dims.n_sub, self.f_tilde)

    def support(self, stats: ChannelStats) -> BeamSupport:
        if not self.prune:
            return BeamSupport.full(stats.k_users, stats.m_t)
        return prune_support(stats, self.energy_keep, self.b_cap)


class LayerInputs(BaseModel):
    """Everything one unfolded layer consumes."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    stats: ChannelStats
    x_prev: PrecoderSet
    comp: CompensationSet
    sampled_subcarriers: tuple[int, ...]
    support: BeamSupport
    interpolated: bool = True

    @model_validator(mode="after")
    def check_inputs(self) -> "LayerInputs":
        nodes = self.sampled_subcarriers
        if self.x_prev.domain != "beam":
            raise ValueError("x_prev must be beam-domain precoders")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("sampled subcarriers must be strictly increasing")
        if not nodes or nodes[0] < 0 or nodes[-1] >= self.stats.n_sub:
            raise ValueError("sampled subcarriers outside the RBG")
        if self.interpolated and (len(nodes) < 3 or nodes[0] != 0 or nodes[-1] != self.stats.n_sub - 1):
            raise ValueError("interpolation needs at least three nodes including both endpoints")
        expected = (self.stats.k_users, len(nodes), self.stats.m_r, self.stats.m_r)
        if self.comp.shape != expected:
            raise ValueError(f"compensation shape {self.comp.shape} does not match {expected}")
        if len(self.support.indices) != self.stats.k_users:
            raise ValueError("support needs one index set per user")
        return self

    @property
    def node_weights(self) -> np.ndarray:
        """Weight of each node in a sum over all subcarriers."""
        if self.interpolated:
            return interpolation_matrix(self.stats.n_sub, self.sampled_subcarriers).sum(axis=0)
        return np.full(len(self.sampled_subcarriers), self.stats.n_sub / len(self.sampled_subcarriers))


class ApproxTerms(BaseModel):
    """Compensated terms of one (user, sampled subcarrier)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    e_hat: np.ndarray = Field(..., description="(m_t × m_r), zero off the user's support")
    f_hat: np.ndarray = Field(..., description="(m_r × m_r) Hermitian")
    g_hat: StructuredMatrix = Field(..., description="Block on the user's support, zero elsewhere")


# ============================================================================
# Closed-form expectations
# ============================================================================

def expected_gram(mean: np.ndarray, var: np.ndarray, m: np.ndarray) -> np.ndarray:
    """
    E[Hᴴ M H] = H̄ᴴ M H̄ + Diag_p(Σ_r M_rr·var_rp) for H with independent entries.

    Args:
        mean: H̄ (m_r × n)
        var: Element variances (m_r × n)
        m: (m_r × m_r)

    Returns:
        (n × n) matrix, Hermitian when m is
    """
    if mean.shape != var.shape or m.shape != (mean.shape[0], mean.shape[0]):
        raise ShapeError(f"expected_gram shapes mean={mean.shape} var={var.shape} m={m.shape}")
    m_r, n = mean.shape
    count_flops("du_core", "expected_gram", n * n * m_r + m_r * m_r * n + n * m_r)
    gram = herm(mean) @ (m @ mean)
    gram[np.diag_indices(n)] += np.diag(m) @ var
    return gram


def expected_outer(mean: np.ndarray, var: np.ndarray, s: np.ndarray) -> np.ndarray:
    """
    E[H S Hᴴ] = H̄ S H̄ᴴ + Diag_r(Σ_p S_pp·var_rp).

    Args:
        mean: H̄ (m_r × n)
        var: Element variances (m_r × n)
        s: (n × n)

    Returns:
        (m_r × m_r) matrix
    """
    if mean.shape != var.shape or s.shape != (mean.shape[1], mean.shape[1]):
        raise ShapeError(f"expected_outer shapes mean={mean.shape} var={var.shape} s={s.shape}")
    m_r, n = mean.shape
    count_flops("du_core", "expected_outer", m_r * n * n + m_r * m_r * n + m_r * n)
    outer = mean @ s @ herm(mean)
    outer[np.diag_indices(m_r)] += var @ np.diag(s)
    return outer


def _expected_outer_lowrank(mean: np.ndarray, var: np.ndarray, x: np.ndarray) -> np.ndarray:
    """expected_outer with S = Σ_m X_m X_mᴴ given as stacked X (K, n, r)."""
    hx = np.einsum("rt,kts->krs", mean, x)
    count_flops("du_core", "expected_outer", x.shape[0] * (mean.size * x.shape[2] + mean.shape[0] ** 2 * x.shape[2]))
    outer = np.einsum("krs,kqs->rq", hx, hx.conj())
    outer[np.diag_indices(mean.shape[0])] += var @ np.sum(np.abs(x) ** 2, axis=(0, 2))
    return outer


def taylor_diag_inverse(e_mat: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    """
    First-order diagonal Taylor inverse 2E⁺ − E⁺·E·E⁺ + Z.

    E⁺ holds the reciprocal diagonal of E. Diagonal entries below 1e-12·trace
    are floored at that value and logged.

    Raises:
        DegenerateError: If a diagonal entry is not positive
    """
    d = np.real(np.diag(e_mat)).copy()
    if np.any(d <= 0):
        raise DegenerateError(f"taylor_diag_inverse: nonpositive diagonal {d}")
    floor = DIAG_FLOOR * float(d.sum())
    if np.any(d < floor):
        logger.warning("diag_inverse_floored", n_floored=int(np.sum(d < floor)), floor=floor)
        d = np.maximum(d, floor)
    inv = 1.0 / d
    n = d.size
    count_flops("du_core", "taylor_diag_inverse", 2 * n * n)
    approx = -(e_mat * np.outer(inv, inv))
    approx[np.diag_indices(n)] += 2.0 * inv
    if z is not None:
        approx = approx + z
    return approx


# ============================================================================
# Layer
# ============================================================================

def approx_terms(inputs: LayerInputs, k: int, j: int, dims: SystemDims) -> ApproxTerms:
    """
    Compensated Ê, F̂, Ĝ of user k at sampled subcarrier j.

    Channel columns outside the user's support are treated as exact zeros, so
    Ê and Ĝ are computed on the support only.
    """
    f = inputs.sampled_subcarriers[j]
    comp = inputs.comp
    support = inputs.support.user(k)
    m_t, m_r = dims.m_t, dims.m_r

    x = inputs.x_prev.matrices
    mean = inputs.stats.mean[k, f][:, support]
    var = inputs.stats.var[k, f][:, support]
    xs = x[:, support, :]

    noise = dims.noise_vars[k] / dims.p_max * float(np.sum(np.abs(x) ** 2))
    e_a = _expected_outer_lowrank(mean, var, xs) + noise * np.eye(m_r)
    e_d = _expected_outer_lowrank(mean, var, xs[k:k + 1])
    e_c = e_a - e_d

    a_inv = taylor_diag_inverse(e_a, comp.z_a[k, j])
    c_inv = taylor_diag_inverse(e_c, comp.z_c[k, j])

    e_hat = np.zeros((m_t, m_r), dtype=complex)
    e_hat[support] = expected_gram(mean, var, hermitian_part(c_inv + comp.o_e[k, j])) @ xs[k]
    f_hat = hermitian_part(c_inv @ e_d @ a_inv + comp.o_f[k, j])
    g_block = hermitian_part(expected_gram(mean, var, hermitian_part(f_hat + comp.o_g[k, j])))
    count_flops("du_core", "approx_terms", support.size * m_r * m_r + 2 * m_r**3)

    g_hat = StructuredMatrix(diag=np.zeros(m_t), block_idx=tuple(int(i) for i in support), block=g_block)
    return ApproxTerms(e_hat=e_hat, f_hat=f_hat, g_hat=g_hat)


def assemble_btilde(terms: Sequence[Sequence[ApproxTerms]], node_weights: np.ndarray, dims: SystemDims) -> np.ndarray:
    """
    B̃ = Σ_f Σ_m ω_m [(σ_m²/P)·Tr(F̂_{m,f})·I + Ĝ_{m,f}], symmetrized.

    Sums over all subcarriers use the interpolation weight of each node.

    Args:
        terms: terms[k][j] for user k and sampled subcarrier j
        node_weights: Weight of each node in the subcarrier sum
        dims: System dimensions

    Returns:
        Dense Hermitian (m_t × m_t)
    """
    m_t = dims.m_t
    b = np.zeros((m_t, m_t), dtype=complex)
    scalar = 0.0
    for k, row in enumerate(terms):
        for j, term in enumerate(row):
            c = node_weights[j] * dims.weights[k]
            scalar += c * dims.noise_vars[k] / dims.p_max * float(np.real(np.trace(term.f_hat)))
            g = term.g_hat
            b[np.diag_indices(m_t)] += c * g.diag
            if g.q:
                idx = np.asarray(g.block_idx)
                b[np.ix_(idx, idx)] += c * (g.block - np.diag(g.diag[idx]))
    b[np.diag_indices(m_t)] += scalar
    return hermitian_part(b)


def du_layer(inputs: LayerInputs, dims: SystemDims, options: DuOptions | None = None) -> PrecoderSet:
    """
    One unfolded layer X_k = B̃⁻¹ Σ_f ω_k Ê_{k,f}, without power scaling.

    A zero x_prev yields zero X flagged degenerate.

    Raises:
        DegenerateError: If B̃ is zero or cannot be inverted
    """
    options = options or DuOptions()
    x_prev = inputs.x_prev.matrices
    k_users, m_t, m_r = x_prev.shape
    if not np.any(x_prev):
        logger.warning("du_layer_degenerate", reason="zero x_prev", layer=inputs.comp.layer_index)
        return PrecoderSet.zeros(k_users, m_t, m_r, domain="beam", degenerate=True)

    weights = inputs.node_weights
    n_nodes = len(inputs.sampled_subcarriers)
    terms = [[approx_terms(inputs, k, j, dims) for j in range(n_nodes)] for k in range(k_users)]
    b_tilde = assemble_btilde(terms, weights, dims)
    if not np.any(b_tilde):
        raise DegenerateError("du_layer: B̃ is zero")

    rhs = np.stack([
        dims.weights[k] * sum(weights[j] * terms[k][j].e_hat for j in range(n_nodes))
        for k in range(k_users)
    ])
    stacked = rhs.transpose(1, 0, 2).reshape(m_t, k_users * m_r)

    if options.dense_inverse:
        solution = dense_solve(b_tilde, stacked)
    else:
        result = structured_inverse(
            b_tilde, stacked, q_cap=options.q_cap, threshold=options.q_threshold, tolerance=options.residual_tol,
        )
        solution = result.x
        logger.debug(
            "du_layer_solved",
            layer=inputs.comp.layer_index, q=result.q, residual=result.residual, fallback=result.fallback,
        )

    x = solution.reshape(m_t, k_users, m_r).transpose(1, 0, 2)
    return PrecoderSet(matrices=np.ascontiguousarray(x), domain="beam")


def du_network(
    stats: ChannelStats,
    dims: SystemDims,
    depth: int,
    options: DuOptions | None = None,
    comps: Sequence[CompensationSet] | None = None,
) -> PrecoderSet:
    """
    Unrolled network: matched-filter X⁰, depth layers, then power scaling.

    Args:
        stats: Channel statistics of the block to precode
        dims: System dimensions
        depth: Number of layers to run
        options: Acceleration options
        comps: Compensation per layer (None runs uncompensated)

    Returns:
        Power-scaled antenna-domain precoders

    Raises:
        DegenerateError: If a layer collapses to zero precoders
    """
    if depth < 1:
        raise ValueError(f"depth must be ≥ 1, got {depth}")
    options = options or DuOptions()
    stats.check_dims(dims)
    if comps is not None and len(comps) < depth:
        raise ValueError(f"{len(comps)} compensation sets for depth {depth}")

    nodes = options.nodes(dims)
    support = options.support(stats)
    x = matched_filter_init(stats, dims)
    for i in range(depth):
        comp = comps[i] if comps is not None else CompensationSet.zeros(dims.k_users, len(nodes), dims.m_r, i + 1)
        inputs = LayerInputs(
            stats=stats,
            x_prev=x,
            comp=comp,
            sampled_subcarriers=nodes,
            support=support,
            interpolated=not options.central_only,
        )
        x = du_layer(inputs, dims, options)
        if x.degenerate:
            break
    return scale_to_power(x.to_antenna(), dims.p_max)
