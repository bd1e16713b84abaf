"""WMMSE solver package"""

from .solver import WmmseSolver

__all__ = ["WmmseSolver"]
