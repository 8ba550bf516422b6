"""Earnings-call target-drift scoring and return-predictability backtests."""

__version__ = "0.1.0"
