"""Utility modules for the novikov-lab simulation pipeline."""
