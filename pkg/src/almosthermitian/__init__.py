"""Almost Hermitian geometry: connections, torsion, variational tensors and model expansions."""

__version__ = "0.1.0"
