"""Inverse cluster expansion toolkit.

Correlation-function algebra (truncation, the rooted tilde family), the
chemical-potential expansion built from it, Bell-polynomial convergence
constants, the Kirkwood-closure oracle, a grand-canonical sampler and an
estimation pipeline that closes the loop on sampled data.
"""

__version__ = "0.1.0"
SPEC_VERSION = "1.0"
