"""Joint embedding of knowledge-graph triples and distantly supervised sentences."""

__version__ = "0.1.0"
