"""Metrics, experiment orchestration, configuration and CLI."""
