"""Event reasoning over object-trace videos."""
