"""Permissioned hash-chained ledger for sugarcane supply-chain provenance."""

__version__ = "0.1.0"

from .errors import SugarChainError

__all__ = ["SugarChainError", "__version__"]
