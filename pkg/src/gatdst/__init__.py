"""Graph-attention-enhanced causal language model for dialogue state tracking.

A desk-scale, from-scratch stack: dense-matrix reverse-mode autodiff, K-hop
multi-head graph attention over domain-slot (and value) nodes, a tiny causal
decoder-only LM whose decode head consumes injected graph features, sparse
(last-turn) supervision, and the accompanying metric and dependency analyses.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DimensionError, GatDstError, InvariantError
from .ontology import BeliefState, Ontology, load_ontology, save_ontology
from .tokenizer import Tokenizer, build_vocab

__all__ = [
    "BeliefState",
    "ConfigError",
    "DataError",
    "DimensionError",
    "GatDstError",
    "InvariantError",
    "Ontology",
    "Tokenizer",
    "build_vocab",
    "load_ontology",
    "save_ontology",
    "__version__",
]
