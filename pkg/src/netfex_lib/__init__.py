"""Finite-expression discovery of governing equations on complex networks."""

from netfex_lib.__version__ import __lib_name__, __version__

__all__ = ["__lib_name__", "__version__"]
