"""Variational-autoencoder recommenders for implicit feedback sequences."""

__version__ = "0.1.0"
