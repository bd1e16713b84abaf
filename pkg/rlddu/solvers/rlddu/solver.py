"""
RLDDU Solver
Unfolded network whose compensation matrices and depth come from a trained
Gaussian policy (mean action).
"""

from pathlib import Path

from rlddu.core.base_solver import BaseSolver, SolveRequest
from rlddu.core.schemas import SystemDims
from rlddu.optim.du_core import DuOptions
from rlddu.optim.swmmse import PrecoderSet
from rlddu.policy.actions import ActionVector, select_depth
from rlddu.policy.environment import action_layout, run_rlddu
from rlddu.policy.features import encode_context
from rlddu.policy.network import GaussianPolicy, load_policy, policy_mean


def checkpoint_header(dims: SystemDims, options: DuOptions, i_max: int) -> dict:
    """Header entries a checkpoint must carry to be used with these dims."""
    return {
        "dims": {"m_t": dims.m_t, "m_r": dims.m_r, "k_users": dims.k_users, "n_sub": dims.n_sub},
        "f_tilde": len(options.nodes(dims)),
        "i_max": i_max,
    }


class RldduSolver(BaseSolver):
    """Policy-driven compensated unfolded network."""

    def __init__(self, policy: GaussianPolicy, i_max: int = 5, options: DuOptions | None = None):
        super().__init__(
            name="rlddu",
            description=f"Policy-compensated unfolded WMMSE, depth ≤ {i_max}",
        )
        self.policy = policy
        self.i_max = i_max
        self.options = options or DuOptions()

    @classmethod
    def from_checkpoint(cls, path: Path, dims: SystemDims, i_max: int, options: DuOptions) -> "RldduSolver":
        policy, _ = load_policy(path, expected=checkpoint_header(dims, options, i_max))
        return cls(policy, i_max=i_max, options=options)

    def solve(self, request: SolveRequest) -> tuple[PrecoderSet, float]:
        stats, dims = request.stats, request.dims
        layout = action_layout(dims, self.options, self.i_max)
        support = self.options.support(stats)
        features = encode_context(stats, support, dims, self.options.nodes(dims))
        action = ActionVector(values=policy_mean(self.policy, features), layout=layout)
        depth = select_depth(action.beta)
        return run_rlddu(stats, action, dims, self.options), float(depth)
