"""Tests for netfex_api package."""
