"""Ellipsoid-based contextual posted pricing with reserve prices."""

__version__ = "0.1.0"
