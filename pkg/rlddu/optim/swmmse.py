"""
RLDDU Stochastic WMMSE
Wideband weighted-MMSE precoding by block coordinate descent over (U, W, V)
with sample average approximation of the channel expectation, power scaling
and Monte Carlo ergodic rate evaluation.

All BCD operations take antenna-domain channels of shape (K, F, m_r, m_t).
"""

from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rlddu.accel.flops import count_flops
from rlddu.channel.model import (
    ChannelStats,
    dft_matrix,
    realization_rng,
    sample_channel,
    to_antenna_domain,
)
from rlddu.core.errors import DegenerateError, ShapeError
from rlddu.core.schemas import SystemDims
from rlddu.optim.linalg import herm, hermitian_part, hermitian_solve, real_trace

logger = structlog.get_logger(__name__)

LN2 = np.log(2.0)
MC_BATCH = 32


# ============================================================================
# Types
# ============================================================================

class PrecoderSet(BaseModel):
    """
    Per-user precoders V_k (antenna domain) or X_k = ΦV_k (beam domain).

    matrices has shape (K, m_t, m_r); power caches Σ_k Tr(V_k V_kᴴ).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrices: np.ndarray = Field(..., description="Complex (K, m_t, m_r)")
    domain: Literal["antenna", "beam"] = "antenna"
    power: float = Field(..., ge=0)
    degenerate: bool = Field(default=False, description="Produced by a degenerate fallback path")

    @model_validator(mode="before")
    @classmethod
    def fill_power(cls, data):
        if isinstance(data, dict) and data.get("power") is None and "matrices" in data:
            data = dict(data)
            data["power"] = float(np.sum(np.abs(np.asarray(data["matrices"])) ** 2))
        return data

    @model_validator(mode="after")
    def check_matrices(self) -> "PrecoderSet":
        if self.matrices.ndim != 3:
            raise ValueError(f"matrices must be (K, m_t, m_r), got shape {self.matrices.shape}")
        if not np.all(np.isfinite(self.matrices)):
            raise ValueError("precoders have non-finite entries")
        recomputed = float(np.sum(np.abs(self.matrices) ** 2))
        if abs(recomputed - self.power) > 1e-10 * max(recomputed, 1e-300):
            raise ValueError(f"cached power {self.power} differs from trace sum {recomputed}")
        return self

    @classmethod
    def zeros(cls, k_users: int, m_t: int, m_r: int, domain: str = "antenna", degenerate: bool = True) -> "PrecoderSet":
        return cls(matrices=np.zeros((k_users, m_t, m_r), dtype=complex), domain=domain, degenerate=degenerate)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrices)

    def to_antenna(self) -> "PrecoderSet":
        if self.domain == "antenna":
            return self
        phi = dft_matrix(self.matrices.shape[1])
        return PrecoderSet(matrices=phi.conj().T @ self.matrices, domain="antenna", degenerate=self.degenerate)

    def to_beam(self) -> "PrecoderSet":
        if self.domain == "beam":
            return self
        phi = dft_matrix(self.matrices.shape[1])
        return PrecoderSet(matrices=phi @ self.matrices, domain="beam", degenerate=self.degenerate)


class BcdState(BaseModel):
    """Receive filters U and weights W per (user, subcarrier), shape (K, F, m_r, m_r)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    w: np.ndarray
    iteration: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_weights(self) -> "BcdState":
        if self.u.shape != self.w.shape:
            raise ValueError(f"u shape {self.u.shape} differs from w shape {self.w.shape}")
        scale = max(float(np.max(np.abs(self.w))), 1.0)
        if np.max(np.abs(self.w - herm(self.w))) > 1e-9 * scale:
            raise ValueError("w is not Hermitian")
        if np.min(np.linalg.eigvalsh(hermitian_part(self.w))) <= -1e-9 * scale:
            raise ValueError("w is not positive definite")
        return self


class SwmmseTraceRow(BaseModel):
    """One BCD iteration of a SWMMSE run."""

    iteration: int
    objective: float
    ridge_count: int


class SwmmseResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    precoders: PrecoderSet
    trace: list[SwmmseTraceRow] = Field(default_factory=list)
    ridge_count: int = 0


# ============================================================================
# Rates
# ============================================================================

def _check_antenna(precoders: PrecoderSet) -> np.ndarray:
    if precoders.domain != "antenna":
        raise ValueError("expected antenna-domain precoders")
    return precoders.matrices


def _noise_power(v: np.ndarray, dims: SystemDims, surrogate: bool) -> np.ndarray:
    """Per-user noise level: σ_k² or the surrogate (σ_k²/P)·Σ Tr(VVᴴ)."""
    sigma2 = dims.sigma2
    if surrogate:
        sigma2 = sigma2 / dims.p_max * float(np.sum(np.abs(v) ** 2))
    return sigma2


def rates(h: np.ndarray, precoders: PrecoderSet, dims: SystemDims, surrogate: bool = False) -> np.ndarray:
    """
    Per-(user, subcarrier) rates in bits/s/Hz.

    Args:
        h: Antenna-domain channels (..., K, F, m_r, m_t)
        precoders: Antenna-domain precoders
        dims: System dimensions
        surrogate: Use the noise term (σ²/P)·Σ Tr(VVᴴ) instead of σ²

    Returns:
        Array (..., K, F)

    Raises:
        DegenerateError: If an interference-plus-noise matrix is singular
    """
    v = _check_antenna(precoders)
    if h.shape[-1] != v.shape[1] or h.shape[-4] != v.shape[0]:
        raise ShapeError(f"channel shape {h.shape} inconsistent with precoders {v.shape}")
    m_r = h.shape[-2]

    q = np.einsum("kts,kus->tu", v, v.conj())
    total = h @ q @ herm(h)
    own = np.einsum("...kfrt,kts->...kfrs", h, v)
    signal = own @ herm(own)

    noise = _noise_power(v, dims, surrogate)[:, None, None, None] * np.eye(m_r)
    total = total + noise
    interference = total - signal

    sign_t, logdet_t = np.linalg.slogdet(total)
    sign_i, logdet_i = np.linalg.slogdet(interference)
    if np.any(np.abs(sign_i) == 0) or not np.all(np.isfinite(logdet_i)):
        raise DegenerateError("singular interference-plus-noise matrix")
    return np.maximum((logdet_t - logdet_i) / LN2, 0.0)


def rate_per_user(h_f: np.ndarray, precoders: PrecoderSet, dims: SystemDims, surrogate: bool = False) -> np.ndarray:
    """Rates of all users at one subcarrier; h_f has shape (K, m_r, m_t)."""
    return rates(h_f[:, None], precoders, dims, surrogate=surrogate)[:, 0]


def weighted_sum_rate(h: np.ndarray, precoders: PrecoderSet, dims: SystemDims) -> float:
    """Σ_k Σ_f ω_k R_{k,f} for one antenna-domain channel (K, F, m_r, m_t)."""
    return float(np.sum(dims.omega[:, None] * rates(h, precoders, dims)))


# ============================================================================
# BCD updates
# ============================================================================

def _covariance(h: np.ndarray, v: np.ndarray, dims: SystemDims) -> np.ndarray:
    """A = Σ_m H V_m V_mᴴ Hᴴ + (σ_k²/P)·Σ_m Tr(V_m V_mᴴ)·I per (k, f)."""
    k_users, n_sub, m_r, m_t = h.shape
    q = np.einsum("kts,kus->tu", v, v.conj())
    count_flops("swmmse", "covariance", k_users * n_sub * (m_r * m_t**2 + m_r**2 * m_t))
    noise = _noise_power(v, dims, surrogate=True)[:, None, None, None] * np.eye(m_r)
    return h @ q @ herm(h) + noise


def _update_u(h: np.ndarray, precoders: PrecoderSet, dims: SystemDims) -> tuple[np.ndarray, int]:
    v = _check_antenna(precoders)
    if not np.any(v):
        raise DegenerateError("update_u: all precoders are zero, A = 0")
    a = _covariance(h, v, dims)
    own = np.einsum("kfrt,kts->kfrs", h, v)
    return hermitian_solve(a, own, module="swmmse", op="update_u")


def update_u(h: np.ndarray, precoders: PrecoderSet, dims: SystemDims) -> np.ndarray:
    """
    MMSE receive filters U_{k,f} = A_{k,f}⁻¹ H_{k,f} V_k.

    Raises:
        DegenerateError: If every precoder is zero
    """
    return _update_u(h, precoders, dims)[0]


def update_w(h: np.ndarray, precoders: PrecoderSet, u: np.ndarray, dims: SystemDims) -> np.ndarray:
    """
    MSE weights W_{k,f} = (I − U_{k,f}ᴴ H_{k,f} V_k)⁻¹, symmetrized.

    Raises:
        DegenerateError: If I − UᴴHV is singular
    """
    v = _check_antenna(precoders)
    m_r = h.shape[-2]
    own = np.einsum("kfrt,kts->kfrs", h, v)
    e = np.eye(m_r) - herm(u) @ own
    try:
        w = np.linalg.inv(e)
    except np.linalg.LinAlgError as exc:
        bad = [tuple(int(i) for i in idx) for idx in np.argwhere(np.abs(np.linalg.det(e)) == 0)]
        raise DegenerateError(f"update_w: singular I - UᴴHV at (user, subcarrier) {bad}") from exc
    count_flops("swmmse", "update_w", h.shape[0] * h.shape[1] * m_r**3)
    return hermitian_part(w)


def _update_v(
    samples: list[np.ndarray],
    us: list[np.ndarray],
    ws: list[np.ndarray],
    dims: SystemDims,
) -> tuple[PrecoderSet, int]:
    if not samples:
        raise ValueError("update_v needs at least one channel sample")
    if not len(samples) == len(us) == len(ws):
        raise ValueError("samples, u and w must have equal length")

    m_t, m_r, k_users = dims.m_t, dims.m_r, dims.k_users
    omega = dims.omega
    noise_scale = omega * dims.sigma2 / dims.p_max
    b = np.zeros((m_t, m_t), dtype=complex)
    rhs = np.zeros((k_users, m_t, m_r), dtype=complex)

    for h, u, w in zip(samples, us, ws):
        uw = u @ w
        uwu = uw @ herm(u)
        b += np.sum(noise_scale[:, None] * real_trace(uwu)) * np.eye(m_t)
        b += np.einsum("kfrt,kfrq,kfqu->tu", h.conj(), omega[:, None, None, None] * uwu, h)
        rhs += omega[:, None, None] * np.einsum("kfrt,kfrs->kts", h.conj(), uw)
        count_flops("swmmse", "update_v", h.shape[0] * h.shape[1] * (m_t**2 * m_r + m_t * m_r**2))

    b /= len(samples)
    rhs /= len(samples)

    stacked = rhs.transpose(1, 0, 2).reshape(m_t, k_users * m_r)
    x, n_ridge = hermitian_solve(b, stacked, module="swmmse", op="update_v")
    v = x.reshape(m_t, k_users, m_r).transpose(1, 0, 2)
    return PrecoderSet(matrices=np.ascontiguousarray(v), domain="antenna"), n_ridge


def update_v(
    samples: list[np.ndarray],
    us: list[np.ndarray],
    ws: list[np.ndarray],
    dims: SystemDims,
) -> PrecoderSet:
    """
    Precoder update V_k = B⁻¹ Σ_f avg[ω_k H_{k,f}ᴴ U_{k,f} W_{k,f}].

    B = Σ_f Σ_m avg[(σ_m²/P)·ω_m·Tr(U W Uᴴ)·I + ω_m Hᴴ U W Uᴴ H], with sample
    averages over the SAA batch in the given order.

    Raises:
        ValueError: If the sample list is empty
    """
    return _update_v(samples, us, ws, dims)[0]


def scale_to_power(precoders: PrecoderSet, p_max: float) -> PrecoderSet:
    """
    Scale all precoders by the common ξ = sqrt(P_max / Σ Tr(VVᴴ)).

    Raises:
        DegenerateError: If all precoders are zero
    """
    power = float(np.sum(np.abs(precoders.matrices) ** 2))
    if power == 0.0:
        raise DegenerateError("scale_to_power: all precoders are zero")
    xi = np.sqrt(p_max / power)
    return PrecoderSet(matrices=xi * precoders.matrices, domain=precoders.domain, degenerate=precoders.degenerate)


def wmmse_objective(h: np.ndarray, precoders: PrecoderSet, state: BcdState, dims: SystemDims) -> float:
    """
    Weighted MMSE objective Σ_k Σ_f ω_k (Tr(W Ẽ) − ln det W).

    Ẽ uses the noise term (σ²/P)·Σ Tr(VVᴴ), so the objective is scale-free in V.
    """
    v = _check_antenna(precoders)
    m_r = h.shape[-2]
    u, w = state.u, state.w
    a = _covariance(h, v, dims)
    g = herm(u) @ np.einsum("kfrt,kts->kfrs", h, v)
    e = np.eye(m_r) - g - herm(g) + herm(u) @ a @ u
    _, logdet_w = np.linalg.slogdet(w)
    per_kf = real_trace(w @ e) - np.real(logdet_w)
    return float(np.sum(dims.omega[:, None] * per_kf))


# ============================================================================
# Solver loop
# ============================================================================

def matched_filter_init(stats: ChannelStats, dims: SystemDims) -> PrecoderSet:
    """
    Beam-domain matched filter X_k = (H̄ᵇ_{k,f_c})ᴴ at the central subcarrier,
    scaled to per-user power P/K.

    Raises:
        DegenerateError: If a user has neither mean nor variance energy at f_c
    """
    f_c = dims.central_subcarrier
    x = herm(stats.mean[:, f_c]).copy()
    per_user = np.sqrt(dims.p_max / dims.k_users)
    for k in range(dims.k_users):
        norm = np.linalg.norm(x[k])
        if norm == 0.0:
            x[k] = np.sqrt(stats.omega[k, f_c]).T.astype(complex)
            norm = np.linalg.norm(x[k])
            if norm == 0.0:
                raise DegenerateError(f"user {k} has no channel energy at the central subcarrier")
            logger.warning("matched_filter_fallback", user=k, subcarrier=f_c)
        x[k] *= per_user / norm
    return PrecoderSet(matrices=x, domain="beam")


def initial_precoders(stats: ChannelStats, dims: SystemDims) -> PrecoderSet:
    """Antenna-domain V⁰ = Φᴴ X⁰ from the matched filter."""
    return matched_filter_init(stats, dims).to_antenna()


def swmmse_run(
    stats: ChannelStats,
    n_iters: int,
    n_saa_samples: int,
    seed: int,
    dims: SystemDims,
    record_trace: bool = False,
) -> SwmmseResult:
    """
    Stochastic wideband WMMSE with a fresh SAA batch every iteration.

    With var ≡ 0 the batch collapses to the posterior mean and the run is the
    deterministic wideband WMMSE.

    Args:
        stats: Channel statistics of the block to precode
        n_iters: BCD iterations (≥ 1)
        n_saa_samples: Channel samples per iteration (≥ 1)
        seed: Seed of the SAA sample substreams
        dims: System dimensions
        record_trace: Evaluate the weighted MMSE objective after every iteration

    Returns:
        SwmmseResult with power-scaled antenna-domain precoders

    Raises:
        ValueError: If n_iters or n_saa_samples is below 1
    """
    if n_iters < 1:
        raise ValueError(f"n_iters must be ≥ 1, got {n_iters}")
    if n_saa_samples < 1:
        raise ValueError(f"n_saa_samples must be ≥ 1, got {n_saa_samples}")
    stats.check_dims(dims)

    deterministic = not np.any(stats.var)
    mean_antenna = to_antenna_domain(stats.mean) if deterministic else None
    precoders = initial_precoders(stats, dims)
    trace: list[SwmmseTraceRow] = []
    ridge_total = 0

    for i in range(n_iters):
        if deterministic:
            samples = [mean_antenna]
        else:
            samples = [
                to_antenna_domain(sample_channel(stats, realization_rng(seed, i * n_saa_samples + s)))
                for s in range(n_saa_samples)
            ]

        us, ws = [], []
        for h in samples:
            u, n_ridge = _update_u(h, precoders, dims)
            ridge_total += n_ridge
            us.append(u)
            ws.append(update_w(h, precoders, u, dims))

        precoders, n_ridge = _update_v(samples, us, ws, dims)
        ridge_total += n_ridge

        if record_trace:
            objective = float(np.mean([
                wmmse_objective(h, precoders, BcdState(u=u, w=w, iteration=i + 1), dims)
                for h, u, w in zip(samples, us, ws)
            ]))
            trace.append(SwmmseTraceRow(iteration=i + 1, objective=objective, ridge_count=ridge_total))

    if ridge_total:
        logger.warning("swmmse_ridge_activations", count=ridge_total, n_iters=n_iters)

    return SwmmseResult(precoders=scale_to_power(precoders, dims.p_max), trace=trace, ridge_count=ridge_total)


def swmmse_solve(
    stats: ChannelStats,
    n_iters: int,
    n_saa_samples: int,
    seed: int,
    dims: SystemDims,
) -> PrecoderSet:
    """Power-feasible SWMMSE precoders; see swmmse_run."""
    return swmmse_run(stats, n_iters, n_saa_samples, seed, dims).precoders


# ============================================================================
# Ergodic evaluation
# ============================================================================

def ewsr_samples(
    stats: ChannelStats,
    precoders: PrecoderSet,
    n_mc: int,
    seed: int,
    dims: SystemDims,
) -> np.ndarray:
    """Weighted sum rate of each of n_mc common-random-number channel draws."""
    if n_mc < 1:
        raise ValueError(f"n_mc must be ≥ 1, got {n_mc}")
    stats.check_dims(dims)
    precoders = precoders.to_antenna()

    values = np.empty(n_mc)
    for start in range(0, n_mc, MC_BATCH):
        stop = min(start + MC_BATCH, n_mc)
        draws = np.stack([
            sample_channel(stats, realization_rng(seed, s)).h_beam for s in range(start, stop)
        ])
        r = rates(to_antenna_domain(draws), precoders, dims)
        values[start:stop] = np.sum(dims.omega[:, None] * r, axis=(-2, -1))
    return values


def ewsr_eval(
    stats: ChannelStats,
    precoders: PrecoderSet,
    n_mc: int,
    seed: int,
    dims: SystemDims,
) -> float:
    """
    Ergodic weighted sum rate Σ_k Σ_f ω_k R_{k,f}, averaged over n_mc draws.

    Draw s comes from realization_rng(seed, s), so precoder sets evaluated with
    the same seed see identical channels. Point-mass statistics (var ≡ 0) are
    evaluated once on the mean.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be ≥ 1, got {n_mc}")
    if precoders.is_zero:
        return 0.0
    if not np.any(stats.var):
        stats.check_dims(dims)
        return weighted_sum_rate(to_antenna_domain(stats.mean), precoders.to_antenna(), dims)
    return float(np.mean(ewsr_samples(stats, precoders, n_mc, seed, dims)))
