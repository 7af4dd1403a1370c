"""Memory-augmented self-supervised dense tracking at desk scale."""
__version__ = "0.1.0"
