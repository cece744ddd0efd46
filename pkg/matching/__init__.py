"""One-to-one proposal/target matching."""
