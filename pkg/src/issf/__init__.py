"""Adversarial simulation, training and ELO benchmarking of cloud-native security agents."""

__version__ = "0.1.0"
