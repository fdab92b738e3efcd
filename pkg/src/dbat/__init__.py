"""Double-boundary adversarial training on small numpy MLPs."""

__version__ = "0.1.0"
