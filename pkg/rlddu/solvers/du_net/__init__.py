"""DU-Net solver package"""

from .solver import DuNetSolver

__all__ = ["DuNetSolver"]
