"""Monte Carlo simulator of legacy/entrant coexistence in an unlicensed band."""

__version__ = "0.1.0"
