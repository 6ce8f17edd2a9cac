"""Tensor-based channel parameter estimation for wideband hybrid UCyA receivers."""
