"""Checksummed ML pipelines, lifecycle provenance and model passports."""

__version__ = "0.1.0"
