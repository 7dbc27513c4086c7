"""Tests for the MST-former package."""
