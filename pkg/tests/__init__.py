"""Tests for the HetNet downlink simulator."""
