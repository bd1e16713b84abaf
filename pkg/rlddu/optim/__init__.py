"""
Precoder optimization: stochastic WMMSE and the unfolded layer.

Import from the submodules (rlddu.optim.swmmse, rlddu.optim.du_core);
rlddu.accel depends on rlddu.optim.linalg.
"""
