"""Two-level overlapping Schwarz preconditioners for the Helmholtz equation (P2 finite elements)."""

__version__ = "0.1.0"
