"""Pydantic run configuration models for netfex experiments."""
