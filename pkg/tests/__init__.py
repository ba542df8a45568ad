"""Test suite for Uruguay Climate Change project."""
