"""External-predictor protocol adapter for the AF recurrence pipeline."""

__version__ = "0.1.0"
