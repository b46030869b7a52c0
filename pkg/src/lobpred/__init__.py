"""Limit-order-book mid-price prediction workbench."""

__version__ = "0.1.0"
