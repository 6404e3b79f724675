"""Explainable financial risk classification from sentence-structured filings."""

__version__ = "0.1.0"
