"""Decision-level evaluation of ensemble weather forecasts."""

__version__ = "1.0.0"
