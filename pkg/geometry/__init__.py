"""Geometric primitives shared by every package."""
