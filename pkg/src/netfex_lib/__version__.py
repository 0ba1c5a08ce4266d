"""Version information for lib package."""

__lib_name__ = "netfex-lib"
__version__ = "0.2.0"
