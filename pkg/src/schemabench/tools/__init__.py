"""Deterministic tool executors."""
