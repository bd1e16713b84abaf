"""
RLDDU Orchestrator
Runs experiment grids, policy training, complexity reports and self-tests
from one ExperimentConfig, and writes their CSV outputs.
"""

import csv
import threading
import uuid
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel

from rlddu.accel.flops import FlopConstants, flop_counter, flop_estimate, flop_model
from rlddu.accel.interp import interpolate, interpolation_matrix, lagrange_interp3
from rlddu.channel.model import make_scenario, stats_for_block
from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.core.errors import ConfigError
from rlddu.core.schemas import (
    REPORT_COLUMNS,
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    SystemDims,
)
from rlddu.optim.du_core import DuOptions, du_network, taylor_diag_inverse
from rlddu.optim.swmmse import ewsr_eval
from rlddu.policy.actions import select_depth
from rlddu.policy.environment import EnvironmentConfig, PrecodingEnvironment, action_layout, reward
from rlddu.policy.network import GaussianPolicy, load_policy, policy_mean, save_policy
from rlddu.policy.trainer import TrainerOptions, TrainingResult, train_policy
from rlddu.solvers import DuNetSolver, PoWmmseSolver, RldduSolver, SwmmseSolver, WmmseSolver
from rlddu.solvers.rlddu.solver import checkpoint_header
from rlddu.utils.config import (
    CHECKPOINT_FILE,
    DEPTH_FILE,
    FLOPS_FILE,
    RESULTS_FILE,
    TRACE_FILE,
    ensure_output_dir,
)
from rlddu.utils.logger import run_logging

SWMMSE_TRACE_FILE = "swmmse_trace.csv"
REFERENCE_DIMS = SystemDims.from_snr(m_t=64, m_r=2, k_users=10, n_sub=48, snr_db=20.0)
REFERENCE_SWMMSE_FLOPS = 2.3e7


class SelftestCheck(BaseModel):
    name: str
    passed: bool
    detail: str


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    """Header plus rows, LF line endings."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(header))
        writer.writerows(rows)
    return Path(path)


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


class ExperimentOrchestrator:
    """
    One orchestrator per CLI invocation.

    Grid points (K, SNR, seed) run on a thread pool; rows are collected in
    grid order and written by a single writer, so outputs do not depend on
    the worker count.
    """

    def __init__(self, config: ExperimentConfig, threads: int = 1, instrument: bool = False):
        self.config = config
        self.threads = max(1, threads)
        self.instrument = instrument
        self.out_dir = ensure_output_dir(config.out_dir)
        self.options = DuOptions(
            f_tilde=config.f_tilde,
            energy_keep=config.energy_keep,
            b_cap=config.b_cap,
            q_cap=config.q_cap,
            q_threshold=config.q_threshold,
            residual_tol=config.residual_tol,
        )
        self.logger = structlog.get_logger(__name__)
        self._policies: dict[int, GaussianPolicy] = {}
        self._policy_lock = threading.Lock()

        self.logger.info(
            "orchestrator_initialized",
            algorithms=config.algorithms,
            threads=self.threads,
            instrument=instrument,
            out_dir=str(self.out_dir),
        )

    # ------------------------------------------------------------------
    # Solvers
    # ------------------------------------------------------------------

    def _load_policy(self, dims: SystemDims) -> GaussianPolicy:
        """Checkpoint policy, validated once per user count."""
        with self._policy_lock:
            if dims.k_users not in self._policies:
                expected = checkpoint_header(dims, self.options, self.config.i_max)
                self._policies[dims.k_users], _ = load_policy(self.config.policy_checkpoint, expected=expected)
            return self._policies[dims.k_users]

    def build_solvers(self, dims: SystemDims) -> list[BaseSolver]:
        """Solvers for config.algorithms, in config order."""
        cfg = self.config
        solvers: list[BaseSolver] = []
        for name in cfg.algorithms:
            if name == "wmmse":
                solvers.append(WmmseSolver(cfg.wmmse_iterations))
            elif name == "swmmse":
                solvers.append(SwmmseSolver(cfg.swmmse_iterations, cfg.saa_batch, record_trace=cfg.write_trace))
            elif name == "swmmse_ub":
                solvers.append(SwmmseSolver(
                    cfg.upper_bound_iterations, cfg.saa_batch, name="swmmse_ub", record_trace=cfg.write_trace,
                ))
            elif name == "du":
                solvers.append(DuNetSolver(cfg.du_layers, self.options))
            elif name == "po_wmmse":
                solvers.append(PoWmmseSolver(cfg.du_layers, self.options))
            elif name == "rlddu":
                solvers.append(RldduSolver(self._load_policy(dims), cfg.i_max, self.options))
        return solvers

    def _flop_constants(self, iterations: int) -> FlopConstants:
        cfg = self.config
        return FlopConstants(
            b=cfg.flop_b,
            q=cfg.flop_q,
            f_tilde=cfg.f_tilde,
            i=iterations,
            d=cfg.flop_d,
            c=cfg.flop_c,
            h=cfg.flop_h,
        )

    def _formula_flops(self, algorithm: str, dims: SystemDims) -> float:
        cfg = self.config
        family, iterations = {
            "wmmse": ("swmmse", cfg.wmmse_iterations),
            "swmmse": ("swmmse", cfg.swmmse_iterations),
            "swmmse_ub": ("swmmse", cfg.upper_bound_iterations),
            "du": ("du", cfg.du_layers),
            "po_wmmse": ("po_wmmse", cfg.du_layers),
            "rlddu": ("rlddu", cfg.i_max),
        }[algorithm]
        return flop_estimate(dims, family, self._flop_constants(iterations))

    # ------------------------------------------------------------------
    # run
    # ------------------------------------------------------------------

    def grid(self) -> list[tuple[int, float, int]]:
        cfg = self.config
        return [(k, snr, seed) for k in cfg.k_users for snr in cfg.snr_db for seed in cfg.seed_list]

    def _run_point(self, point: tuple[int, float, int]) -> tuple[list[ReportRow], list[list]]:
        cfg = self.config
        k_users, snr_db, seed = point
        dims = cfg.dims(k_users, snr_db)
        aging = tuple(cfg.aging)
        stats0 = make_scenario(
            dims,
            cfg.sparsity_b,
            seed,
            taps=cfg.taps,
            delay_spread=cfg.delay_spread,
            init_error=cfg.init_error,
            aging=aging,
        )
        solvers = self.build_solvers(dims)

        rows: list[ReportRow] = []
        trace_rows: list[list] = []
        for block in cfg.blocks:
            stats = stats_for_block(stats0, block)
            crn_seed = _derived_seed(seed, block, 0)
            request = SolveRequest(stats=stats, dims=dims, seed=_derived_seed(seed, block, 1))
            for solver in solvers:
                result = solver.execute(request, instrument=self.instrument)
                ewsr = ewsr_eval(stats, result.precoders, cfg.n_mc, crn_seed, dims)
                rows.append(ReportRow(
                    algorithm=solver.name,
                    block=block,
                    k_users=k_users,
                    snr_db=snr_db,
                    seed=seed,
                    ewsr=ewsr,
                    mean_depth=result.depth,
                    flops_formula=self._formula_flops(solver.name, dims),
                    flops_measured=result.flops_measured,
                    wall_time=result.wall_time if cfg.record_wall_time else None,
                ))
                if cfg.write_trace and isinstance(solver, SwmmseSolver):
                    for t in solver.last_trace:
                        trace_rows.append([solver.name, block, k_users, f"{snr_db:g}", seed,
                                           t.iteration, f"{t.objective:.12g}", t.ridge_count])

        for solver in solvers:
            self.logger.debug("solver_summary", k_users=k_users, snr_db=snr_db, seed=seed, **solver.get_metadata())
        self.logger.info("grid_point_completed", k_users=k_users, snr_db=snr_db, seed=seed, rows=len(rows))
        return rows, trace_rows

    def run(self) -> ExperimentReport:
        """Evaluate every algorithm on every grid point and block; writes results.csv."""
        with run_logging(uuid.uuid4().hex[:12], self.out_dir) as run_log:
            grid = self.grid()
            run_log.info("run_started", points=len(grid), algorithms=self.config.algorithms)

            report = ExperimentReport()
            trace_rows: list[list] = []
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                for rows, traces in pool.map(self._run_point, grid):
                    report.extend(rows)
                    trace_rows.extend(traces)

            path = write_csv(self.out_dir / RESULTS_FILE, REPORT_COLUMNS, (row.as_csv_fields() for row in report.rows))
            if self.config.write_trace:
                write_csv(
                    self.out_dir / SWMMSE_TRACE_FILE,
                    ["algorithm", "block", "k_users", "snr_db", "seed", "iteration", "objective", "ridge_count"],
                    trace_rows,
                )
            run_log.info("run_completed", rows=len(report.rows), path=str(path))
        return report

    # ------------------------------------------------------------------
    # train
    # ------------------------------------------------------------------

    def environment_config(self) -> EnvironmentConfig:
        cfg = self.config
        return EnvironmentConfig(
            dims=cfg.dims(cfg.k_users[0], cfg.snr_db[0]),
            options=self.options,
            i_max=cfg.i_max,
            sparsity_b=cfg.sparsity_b,
            taps=cfg.taps,
            delay_spread=cfg.delay_spread,
            init_error=cfg.init_error,
            aging=tuple(cfg.aging),
            blocks=tuple(cfg.train_blocks),
            pool_size=cfg.context_pool,
            reward_mc=cfg.reward_mc,
            seed=cfg.seed,
        )

    def train(self) -> TrainingResult:
        """Train a policy on the first (K, SNR) of the config; writes checkpoint, trace and depth summary."""
        cfg = self.config
        if not cfg.train_blocks:
            raise ConfigError("train_blocks must name at least one block")
        with run_logging(f"train_{uuid.uuid4().hex[:12]}", self.out_dir) as run_log:
            env = PrecodingEnvironment(self.environment_config())
            policy = GaussianPolicy(
                env.context_shape,
                env.action_dim,
                n_groups=cfg.i_max,
                scale_groups=env.layout.scale_groups(),
                mean_bias=env.mean_bias(),
            )
            run_log.info("training_started", episodes=cfg.episodes, action_dim=env.action_dim, pool=cfg.context_pool)

            result = train_policy(
                env,
                policy,
                cfg.episodes,
                cfg.seed,
                TrainerOptions(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, grad_clip=cfg.grad_clip),
            )

            header = {**checkpoint_header(env.dims, self.options, cfg.i_max), "seed": cfg.seed, "episodes": cfg.episodes}
            save_policy(result.policy, self.out_dir / CHECKPOINT_FILE, header)
            write_csv(
                self.out_dir / TRACE_FILE,
                ["episode", "reward", "depth", "grad_norm", "skipped"],
                ([r.episode, f"{r.reward:.12g}", r.depth, f"{r.grad_norm:.6g}", int(r.skipped)] for r in result.trace),
            )
            write_csv(
                self.out_dir / DEPTH_FILE,
                ["block", "aging", "contexts", "mean_depth"],
                self._depth_summary(env, result.policy),
            )

            run_log.info("training_completed", improvement=result.improvement())
        return result

    def _depth_summary(self, env: PrecodingEnvironment, policy: GaussianPolicy) -> list[list]:
        depths: dict[int, list[int]] = {}
        for index in range(env.config.pool_size):
            ctx = env.context(index)
            depths.setdefault(ctx.block, []).append(env.depth_of(policy_mean(policy, ctx.features)))
        rows = []
        for block in sorted(depths):
            aging = 1.0 if block == 0 else self.config.aging[block - 1]
            rows.append([block, f"{aging:g}", len(depths[block]), f"{np.mean(depths[block]):.4f}"])
            self.logger.info("depth_by_block", block=block, aging=aging, mean_depth=float(np.mean(depths[block])))
        return rows

    # ------------------------------------------------------------------
    # flops
    # ------------------------------------------------------------------

    def flops(self) -> list[list]:
        """Formula rows per algorithm plus, when instrumenting, measured counts per kernel; writes flops.csv."""
        cfg = self.config
        dims = cfg.dims(cfg.k_users[0], cfg.snr_db[0])
        rows: list[list] = []
        iterations = {"swmmse": cfg.swmmse_iterations, "po_wmmse": cfg.du_layers, "du": cfg.du_layers, "rlddu": cfg.i_max}
        formula_values = {}
        for algo, i in iterations.items():
            model = flop_model(dims, algo, self._flop_constants(i))
            formula_values[algo] = model.value
            rows.append([algo, "formula", "total", "", f"{model.value:.6g}"])
            rows.extend([algo, "formula", term, "", f"{value:.6g}"] for term, value in model.terms.items())

        reference_value = flop_estimate(REFERENCE_DIMS, "swmmse", FlopConstants(b=10, q=30, f_tilde=8, i=5))
        self.logger.info(
            "reference_flop_check",
            swmmse=reference_value,
            reference=REFERENCE_SWMMSE_FLOPS,
            ratio=reference_value / REFERENCE_SWMMSE_FLOPS,
            rlddu=flop_estimate(REFERENCE_DIMS, "rlddu", FlopConstants(b=10, q=30, f_tilde=8, i=5)),
            po_wmmse=flop_estimate(REFERENCE_DIMS, "po_wmmse", FlopConstants(b=10, q=30, f_tilde=8, i=5)),
        )

        if self.instrument:
            stats0 = make_scenario(dims, cfg.sparsity_b, cfg.seed, taps=cfg.taps, delay_spread=cfg.delay_spread,
                                   init_error=cfg.init_error, aging=tuple(cfg.aging))
            request = SolveRequest(stats=stats_for_block(stats0, 1), dims=dims, seed=cfg.seed)
            measured = {
                "swmmse": SwmmseSolver(cfg.swmmse_iterations, cfg.saa_batch),
                "po_wmmse": PoWmmseSolver(cfg.du_layers, self.options),
                "du": DuNetSolver(cfg.du_layers, self.options),
            }
            for algo, solver in measured.items():
                with flop_counter() as counter:
                    solver.execute(request)
                rows.extend([algo, module, op, n, f"{formula_values[algo]:.6g}"] for module, op, n in counter.rows())

        write_csv(self.out_dir / FLOPS_FILE, ["algo", "module", "op", "count", "formula_value"], rows)
        return rows

    # ------------------------------------------------------------------
    # selftest
    # ------------------------------------------------------------------

    def selftest(self) -> list[SelftestCheck]:
        """Fast invariant checks on a small scenario."""
        checks: list[SelftestCheck] = []

        def record(name: str, passed: bool, detail: str) -> None:
            checks.append(SelftestCheck(name=name, passed=bool(passed), detail=detail))
            self.logger.info("selftest_check", check=name, passed=bool(passed), detail=detail)

        dims = SystemDims.from_snr(m_t=8, m_r=2, k_users=2, n_sub=12, snr_db=10.0)
        stats = stats_for_block(make_scenario(dims, 3, self.config.seed), 3)
        options = DuOptions(f_tilde=3)

        precoders = du_network(stats, dims, 2, options)
        record("power_feasibility", abs(precoders.power - dims.p_max) <= 1e-9 * dims.p_max, f"power={precoders.power:.12g}")

        diagonal = np.diag([2.0, 5.0, 0.5]).astype(complex)
        gap = np.max(np.abs(taylor_diag_inverse(diagonal) - np.linalg.inv(diagonal)))
        record("taylor_exact_on_diagonal", gap <= 1e-12, f"max_gap={gap:.3e}")

        poly = np.array([[1.0, 2.0], [0.5, -1.0]])
        nodes = [(f, (3.0 - 0.5 * f + 0.25 * f * f) * poly) for f in (0.0, 5.0, 11.0)]
        err = np.max(np.abs(lagrange_interp3(nodes, 7.3) - (3.0 - 0.5 * 7.3 + 0.25 * 7.3**2) * poly))
        matrix = interpolation_matrix(12, (0, 5, 11))
        expanded = interpolate(np.stack([value for _, value in nodes]), matrix)
        grid_err = max(
            np.max(np.abs(expanded[f] - (3.0 - 0.5 * f + 0.25 * f * f) * poly)) for f in range(12)
        )
        err = max(err, grid_err)
        rows_sum = np.max(np.abs(matrix.sum(axis=1) - 1.0))
        record("interpolation_exact", err <= 1e-12 and rows_sum <= 1e-12, f"max_err={err:.3e}")

        zero = action_layout(dims, options, 2).zero_action()
        value = reward(stats, zero, 8, self.config.seed, dims, options)
        record("reward_identity", value == 0.0 and select_depth(zero.beta) == 2, f"reward={value!r}")

        estimate = flop_estimate(REFERENCE_DIMS, "swmmse", FlopConstants(i=5))
        record("flop_bracket", 1.5e7 <= estimate <= 3.5e7, f"swmmse={estimate:.4g}")
        return checks
