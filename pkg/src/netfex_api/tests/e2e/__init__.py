"""End-to-end tests for netfex_api - no mocking allowed."""
