"""PO-WMMSE solver package"""

from .solver import PoWmmseSolver

__all__ = ["PoWmmseSolver"]
