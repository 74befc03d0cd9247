"""Synthetic scenes, SNR scoring and matched-filter baselines."""
