"""R-separation of variables for the conformally invariant Laplace equation in three dimensions."""
from .errors import RsepError
from .jets import Jet, backend

__version__ = "0.1.0"

__all__ = ["Jet", "RsepError", "backend", "__version__"]
