"""Unit tests for netfex_api - fast, isolated tests."""
