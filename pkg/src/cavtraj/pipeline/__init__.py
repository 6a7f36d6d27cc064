"""Orchestration: config, scenario generation, CSV schema, runner, CLI."""
