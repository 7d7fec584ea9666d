"""Transaction-graph analysis of a Zcash-style ledger with a shielded pool."""

__version__ = "0.1.0"
