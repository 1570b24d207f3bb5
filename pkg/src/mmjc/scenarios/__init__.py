"""Presets, configuration and the command-line pipeline."""
