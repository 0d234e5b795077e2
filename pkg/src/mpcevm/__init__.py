"""Simulator and library for MPC-enabled smart-contract execution."""

__version__ = "0.1.0"
