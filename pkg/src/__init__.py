"""Two-tier massive-MIMO HetNet downlink simulator."""
