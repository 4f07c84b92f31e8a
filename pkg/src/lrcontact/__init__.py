"""Contact process on long-range percolation graphs: samplers, renormalization and checks."""

__version__ = "0.1.0"
