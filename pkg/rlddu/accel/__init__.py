"""Acceleration kernels: beam pruning, subcarrier interpolation, structured inverse and flop accounting"""
