"""Ternary random features."""
