"""Deep Belief Markov Models for POMDP belief inference."""

__version__ = "0.1.0"
