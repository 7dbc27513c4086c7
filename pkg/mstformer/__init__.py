"""Multi-scale spatio-temporal transformer for forecasting from irregular image sequences."""

__version__ = "0.1.0"
