"""Command modules; each exposes setup(app) registering one sub-command."""
