"""Quantum, mean-field and classical kinetics of ultracold reaction networks."""

from .network import ParseError, ReactionNetwork, conserved_charges, parse_network

__all__ = ["ParseError", "ReactionNetwork", "conserved_charges", "parse_network", "__version__"]

try:
    from importlib.metadata import version as _version

    __version__ = _version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"
