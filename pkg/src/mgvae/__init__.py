"""Desk-scale multi-grained VAE for style-controllable sequence synthesis."""

__version__ = "0.1.0"
