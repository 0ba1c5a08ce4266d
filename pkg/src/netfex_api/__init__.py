"""Experiment driver and HTTP service for finite-expression network dynamics discovery."""

from netfex_api.__version__ import __api_name__, __description__, __version__

__all__ = ["__api_name__", "__description__", "__version__"]
