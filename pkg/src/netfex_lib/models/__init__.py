"""Domain types of the library."""
