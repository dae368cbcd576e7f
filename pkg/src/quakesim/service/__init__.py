"""CLI, HTTP API, configuration and run persistence."""
