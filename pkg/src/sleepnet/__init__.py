"""Sleep-like STDP consolidation for bias-free ReLU networks."""

__version__ = "0.1.0"
