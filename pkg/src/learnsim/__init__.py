"""Learning simulator parameters with a policy-gradient outer loop."""

__version__ = "0.1.0"
