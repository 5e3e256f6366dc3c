"""Zero-temperature Glauber (coarsening) dynamics on 2D slab lattices."""

__version__ = "0.1.0"

from .geometry import SlabGeometry, SiteId
from .state import SpinConfig, Pattern

__all__ = ["SlabGeometry", "SiteId", "SpinConfig", "Pattern", "__version__"]
