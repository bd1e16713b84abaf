"""
RLDDU Pydantic Schemas
System dimensions, experiment configuration and report records shared by the
numerical modules, the solvers and the CLI.
"""

from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================================
# System Schemas
# ============================================================================

DEFAULT_AGING: tuple[float, ...] = (0.96, 0.92, 0.84, 0.75, 0.63, 0.49)

ALGORITHMS: tuple[str, ...] = ("wmmse", "swmmse", "swmmse_ub", "du", "po_wmmse", "rlddu")


class SystemDims(BaseModel):
    """
    Dimensions and link budget of one RBG in one timeslot.
    The subcarrier count covers 12·N_RB subcarriers of a single RBG.
    """
    model_config = ConfigDict(frozen=True)

    m_t: int = Field(..., ge=1, description="Transmit antennas at the BS")
    m_r: int = Field(..., ge=1, description="Receive antennas per user")
    k_users: int = Field(..., ge=1, description="Number of users")
    n_sub: int = Field(..., ge=12, description="Subcarriers per RBG (12·N_RB)")
    n_blocks: int = Field(default=6, ge=1, description="Downlink blocks per slot (N_b)")
    p_max: float = Field(..., gt=0, description="Total transmit power in watts")
    noise_vars: tuple[float, ...] = Field(..., description="Per-user noise variance σ_k²")
    weights: tuple[float, ...] = Field(..., description="Per-user priority ω_k")

    @model_validator(mode="after")
    def check_consistency(self) -> "SystemDims":
        if self.m_r > self.m_t:
            raise ValueError(f"m_r={self.m_r} exceeds m_t={self.m_t}")
        if self.n_sub % 12:
            raise ValueError(f"n_sub={self.n_sub} is not a multiple of 12")
        if len(self.noise_vars) != self.k_users or len(self.weights) != self.k_users:
            raise ValueError("noise_vars and weights need one entry per user")
        if any(s <= 0 for s in self.noise_vars):
            raise ValueError("noise variances must be positive")
        if any(w <= 0 for w in self.weights):
            raise ValueError("user weights must be positive")
        return self

    @classmethod
    def from_snr(
        cls,
        m_t: int,
        m_r: int,
        k_users: int,
        n_sub: int,
        snr_db: float,
        p_max: float = 1.0,
        n_blocks: int = 6,
        weights: tuple[float, ...] | None = None,
    ) -> "SystemDims":
        """Build dims with σ² = P_max / 10^(snr/10) for every user (transmit SNR)."""
        sigma2 = p_max / 10.0 ** (snr_db / 10.0)
        return cls(
            m_t=m_t,
            m_r=m_r,
            k_users=k_users,
            n_sub=n_sub,
            n_blocks=n_blocks,
            p_max=p_max,
            noise_vars=(sigma2,) * k_users,
            weights=weights or (1.0,) * k_users,
        )

    @property
    def sigma2(self) -> np.ndarray:
        return np.asarray(self.noise_vars, dtype=float)

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def central_subcarrier(self) -> int:
        return self.n_sub // 2


# ============================================================================
# Experiment Configuration
# ============================================================================

_LIST_FIELDS = ("k_users", "snr_db", "aging", "algorithms", "blocks", "train_blocks")


class ExperimentConfig(BaseModel):
    """
    Flat experiment configuration. Loaded from a key=value file by
    rlddu.utils.config.load_config; unknown keys are rejected.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Scenario
    m_t: int = Field(default=16, ge=1)
    m_r: int = Field(default=2, ge=1)
    k_users: list[int] = Field(default_factory=lambda: [3], description="User counts (grid axis)")
    n_sub: int = Field(default=24, ge=12)
    n_blocks: int = Field(default=6, ge=1)
    p_max: float = Field(default=1.0, gt=0)
    snr_db: list[float] = Field(default_factory=lambda: [20.0], description="Transmit SNRs (grid axis)")
    sparsity_b: int = Field(default=4, ge=1, description="Dominant beam columns per user")
    taps: int = Field(default=3, ge=1)
    delay_spread: float = Field(default=4.0, ge=0, description="Largest tap delay in samples")
    init_error: float = Field(default=0.0, ge=0, description="Block-0 error variance as a fraction of Ω")
    aging: list[float] = Field(default_factory=lambda: list(DEFAULT_AGING))
    seed: int = Field(default=0, ge=0)
    seeds: int = Field(default=20, ge=1, description="Number of consecutive scenario seeds")

    # Algorithms
    algorithms: list[str] = Field(default_factory=lambda: ["wmmse", "swmmse", "du"])
    wmmse_iterations: int = Field(default=5, ge=1)
    swmmse_iterations: int = Field(default=5, ge=1)
    upper_bound_iterations: int = Field(default=100, ge=1)
    saa_batch: int = Field(default=4, ge=1)
    du_layers: int = Field(default=5, ge=1)
    i_max: int = Field(default=5, ge=1)
    f_tilde: int = Field(default=5, ge=3)
    energy_keep: float = Field(default=0.99, gt=0, le=1)
    b_cap: int | None = Field(default=None, ge=1)
    q_cap: int = Field(default=30, ge=0)
    q_threshold: float = Field(default=0.2, ge=0)
    residual_tol: float | None = Field(default=0.05, gt=0, description="Structured B̃ residual that triggers a dense solve")
    policy_checkpoint: Path | None = None

    # Evaluation
    n_mc: int = Field(default=512, ge=1)
    blocks: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])

    # Training
    episodes: int = Field(default=200, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0)
    batch_size: int = Field(default=4, ge=1)
    context_pool: int = Field(default=32, ge=1)
    reward_mc: int = Field(default=256, ge=1)
    train_blocks: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    grad_clip: float = Field(default=10.0, gt=0)

    # Flop model constants
    flop_b: int = Field(default=10, ge=1)
    flop_q: int = Field(default=30, ge=1)
    flop_d: int = Field(default=128, ge=1)
    flop_c: int = Field(default=8, ge=1)
    flop_h: int = Field(default=3, ge=1)

    # Output
    out_dir: Path = Path("output")
    record_wall_time: bool = False
    write_trace: bool = False

    @field_validator(*_LIST_FIELDS, mode="before")
    @classmethod
    def split_comma_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        if isinstance(value, (int, float)):
            return [value]
        return value

    @field_validator("policy_checkpoint", "b_cap", "residual_tol", mode="before")
    @classmethod
    def none_literal(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @model_validator(mode="after")
    def check_consistency(self) -> "ExperimentConfig":
        if not self.algorithms:
            raise ValueError("algorithms must name at least one algorithm")
        unknown = sorted(set(self.algorithms) - set(ALGORITHMS))
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        if self.n_sub % 12:
            raise ValueError(f"n_sub={self.n_sub} must equal 12·N_RB for a single RBG")
        if self.m_r > self.m_t:
            raise ValueError("m_r must not exceed m_t")
        if not 1 <= self.sparsity_b <= self.m_t:
            raise ValueError(f"sparsity_b={self.sparsity_b} outside [1, m_t]")
        if len(self.aging) != self.n_blocks:
            raise ValueError(f"aging needs {self.n_blocks} values, got {len(self.aging)}")
        if any(not 0 < a < 1 for a in self.aging):
            raise ValueError("aging coefficients must lie in (0, 1)")
        if self.f_tilde > self.n_sub:
            raise ValueError("f_tilde cannot exceed n_sub")
        if any(k < 1 for k in self.k_users):
            raise ValueError("k_users entries must be positive")
        for name in ("blocks", "train_blocks"):
            if any(not 0 <= b <= self.n_blocks for b in getattr(self, name)):
                raise ValueError(f"{name} entries must lie in [0, {self.n_blocks}]")
        if "rlddu" in self.algorithms:
            if self.policy_checkpoint is None:
                raise ValueError("algorithm rlddu requires policy_checkpoint")
            if not Path(self.policy_checkpoint).exists():
                raise ValueError(f"policy checkpoint not found: {self.policy_checkpoint}")
        return self

    def dims(self, k_users: int, snr_db: float) -> SystemDims:
        """System dimensions for one grid point."""
        return SystemDims.from_snr(
            m_t=self.m_t,
            m_r=self.m_r,
            k_users=k_users,
            n_sub=self.n_sub,
            snr_db=snr_db,
            p_max=self.p_max,
            n_blocks=self.n_blocks,
        )

    @property
    def seed_list(self) -> list[int]:
        return [self.seed + i for i in range(self.seeds)]


# ============================================================================
# Report Schemas
# ============================================================================

REPORT_SCHEMA_VERSION = 1

REPORT_COLUMNS: tuple[str, ...] = (
    "schema_version",
    "algorithm",
    "block",
    "k_users",
    "snr_db",
    "seed",
    "ewsr",
    "mean_depth",
    "flops_formula",
    "flops_measured",
    "wall_time",
)


class ReportRow(BaseModel):
    """One (algorithm, block, K, SNR, seed) evaluation."""
    model_config = ConfigDict(frozen=True)

    algorithm: str
    block: int
    k_users: int
    snr_db: float
    seed: int
    ewsr: float = Field(..., description="Ergodic weighted sum rate, bits/s/Hz summed over users and subcarriers")
    mean_depth: float = Field(..., description="Layers or iterations actually run")
    flops_formula: float
    flops_measured: int | None = None
    wall_time: float | None = None

    def as_csv_fields(self) -> list[str]:
        return [
            str(REPORT_SCHEMA_VERSION),
            self.algorithm,
            str(self.block),
            str(self.k_users),
            f"{self.snr_db:g}",
            str(self.seed),
            f"{self.ewsr:.12g}",
            f"{self.mean_depth:g}",
            f"{self.flops_formula:.6g}",
            "" if self.flops_measured is None else str(self.flops_measured),
            "" if self.wall_time is None else f"{self.wall_time:.4f}",
        ]


class ExperimentReport(BaseModel):
    """Append-only collection of report rows."""

    schema_version: Literal[1] = REPORT_SCHEMA_VERSION
    rows: list[ReportRow] = Field(default_factory=list)

    def append(self, row: ReportRow) -> None:
        self.rows.append(row)

    def extend(self, rows: list[ReportRow]) -> None:
        self.rows.extend(rows)

    def by_algorithm(self, algorithm: str) -> list[ReportRow]:
        return [row for row in self.rows if row.algorithm == algorithm]
