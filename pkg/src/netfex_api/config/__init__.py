"""Environment configuration for the netfex experiment driver."""
