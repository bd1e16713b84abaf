"""RLDDU: robust unfolded WMMSE precoding for massive MU-MIMO-OFDM."""

__version__ = "0.1.0"
