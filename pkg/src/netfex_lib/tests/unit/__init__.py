"""Unit tests for netfex_lib - fast, isolated tests."""
