"""Renegotiable contract-theoretic incentives for federated learning."""
