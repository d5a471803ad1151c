"""Position-velocity recurrent encoder-decoder for pose-sequence prediction."""

__version__ = "0.1.0"

from ._backend import backend_name  # noqa: E402
