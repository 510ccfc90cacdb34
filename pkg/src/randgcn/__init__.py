"""Random graph convolutional networks: synthetic graphs, spectral theory and
Monte Carlo studies."""

__version__ = "0.1.0"

from randgcn._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
