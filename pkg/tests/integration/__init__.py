"""Integration tests - full simulation runs with short gates, plus slow statistical suites."""
