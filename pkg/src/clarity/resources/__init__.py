"""Bundled word lists and label tables used as package data."""
