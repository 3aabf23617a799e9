"""Regional GAN inversion for fine-grained face swapping and editing."""

from rgi.segmap import NUM_CATEGORIES, CATEGORY_NAMES

__version__ = "0.1.0"

__all__ = ["NUM_CATEGORIES", "CATEGORY_NAMES", "__version__"]
