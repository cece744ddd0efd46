"""Localization and counting metrics."""
