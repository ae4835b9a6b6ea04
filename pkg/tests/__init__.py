"""Tests for densketch."""
