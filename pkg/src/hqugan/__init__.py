"""Adversarial learning of quantum states and unitaries with optimal-control players."""

__version__ = "0.1.0"
