"""RLDDU solver package"""

from .solver import RldduSolver, checkpoint_header

__all__ = ["RldduSolver", "checkpoint_header"]
