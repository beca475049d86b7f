"""Desk-scale TCAD sandbox: reference process/device simulators, a from-scratch
neural layer engine, doping/carrier surrogate models with per-node Gaussian
uncertainty, and reproducible speed/convergence/variability studies."""

__version__ = "0.1.0"
