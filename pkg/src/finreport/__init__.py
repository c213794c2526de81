"""News-aware factor modelling, EGARCH risk and explainable stock reports."""

__version__ = "0.1.0"
