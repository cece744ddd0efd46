"""Pseudo-point extraction, Position Aggregation and uncertainty calibration."""
