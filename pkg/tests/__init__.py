"""Test suite for the kslab package."""
