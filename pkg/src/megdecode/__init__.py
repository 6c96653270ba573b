"""megdecode: spatiotemporal neural-signal decoding with interpretable CNNs.

Two classifier variants over multichannel epochs (depthwise-temporal LF and
cross-component VAR), a latent-source simulator for synthetic benchmarks,
training/evaluation harnesses including pseudo-real-time updates, and model
interpretation utilities.
"""

from .backend import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "__version__"]
