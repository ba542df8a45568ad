"""Distributions, trace engine, gradient estimator and optimizer."""
