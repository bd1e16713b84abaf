"""
RLDDU Solvers Package
One solver per algorithm reported by the experiment harness.
"""

from rlddu.solvers.du_net.solver import DuNetSolver
from rlddu.solvers.po_wmmse.solver import PoWmmseSolver
from rlddu.solvers.rlddu.solver import RldduSolver
from rlddu.solvers.swmmse.solver import SwmmseSolver
from rlddu.solvers.wmmse.solver import WmmseSolver

__all__ = [
    "WmmseSolver",
    "SwmmseSolver",
    "DuNetSolver",
    "PoWmmseSolver",
    "RldduSolver",
]
