"""Synthetic crowd scene generation and dataset storage."""
