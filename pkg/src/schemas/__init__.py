"""Pydantic schemas for pipeline configs, task specs and run reports."""
