"""Simulation of a jamming-protected link read out by induced coherence."""
from ._backend import BACKEND
from .link_model import ChannelActors, DomainError, LinkParams

__version__ = "0.1.0"
__all__ = ["BACKEND", "ChannelActors", "DomainError", "LinkParams", "__version__"]
