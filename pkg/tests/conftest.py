"""Shared pytest configuration; keeps the tests directory importable."""
