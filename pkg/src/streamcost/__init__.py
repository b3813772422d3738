"""Zero-shot cost estimation for distributed stream processing queries."""

__version__ = "0.1.0"
