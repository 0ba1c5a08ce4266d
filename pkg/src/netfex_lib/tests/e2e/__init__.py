"""End-to-end tests for netfex_lib - whole pipelines on simulated data, no mocking."""
