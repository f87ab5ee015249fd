"""Sensitivity analysis of stochastic fluid models."""
