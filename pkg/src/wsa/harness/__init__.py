"""Experiment orchestration, checkpoints, metrics and reports."""
