"""Telemetry, logging middleware and helpers for the netfex CLI and HTTP service."""
