"""Proper complex Gaussian-process regression."""
