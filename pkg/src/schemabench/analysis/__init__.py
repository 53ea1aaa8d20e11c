"""Metrics, statistics and reports over trajectory logs."""
