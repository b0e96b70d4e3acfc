"""Commutator-method numerics for uniquely ergodic systems on tori."""

__version__ = "0.1.0"
