"""viewfence: per-request SQL compliance checking against view-based policies."""

__version__ = "0.1.0"
