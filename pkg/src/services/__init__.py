"""Harness services: datasets, training, audits, ablations."""
