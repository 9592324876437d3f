"""Scenarios, metrics, benchmarking and training-data export."""
