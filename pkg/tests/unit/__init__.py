"""Unit tests - pure logic, no simulation runs."""
