"""GARCH-family VaR models with news regressors, model confidence sets and VaR combination."""

__version__ = "0.1.0"
