"""Experiment harness: configuration, runs, figures and manifests."""
