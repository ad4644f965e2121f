"""Optimal holdout set sizing for deployed risk scores."""
