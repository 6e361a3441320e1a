"""Stationary Subspace Analysis as a feature extractor for change point detection."""
