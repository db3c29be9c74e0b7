"""Ingestion module initialization."""
