"""HTTP routers of the netfex service."""
