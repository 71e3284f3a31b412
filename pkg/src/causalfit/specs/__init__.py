"""Shipped data-generating mechanism definitions (JSON)."""
