"""SWMMSE solver package"""

from .solver import SwmmseSolver

__all__ = ["SwmmseSolver"]
