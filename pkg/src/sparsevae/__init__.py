"""Semi-supervised anomaly detection for multivariate production time series."""

__version__ = "0.1.0"
