"""Learning evolution operators of unknown PDEs in modal space with residual networks."""

__version__ = "0.1.0"
