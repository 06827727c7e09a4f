"""Benchmark harness: reference oracle, studies, acceptance checks and CLI."""
