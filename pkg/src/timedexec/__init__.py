"""Simulator and library for privacy-preserving timed execution of smart-contract calls."""

# importing the contract modules registers their kinds with the ledger
from . import proxy, scheduler  # noqa: F401

__version__ = "0.1.0"
