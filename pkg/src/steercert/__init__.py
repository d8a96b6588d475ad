"""Fine-grained steering certification toolkit for three-qubit generalized GHZ states."""

__version__ = "0.1.0"
