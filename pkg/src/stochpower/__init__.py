"""Stochastic power processing with power packet routers."""

__version__ = "0.1.0"
