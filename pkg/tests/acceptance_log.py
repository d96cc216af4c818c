"""Per-criterion verdict lines, shared by the acceptance tests and the summary hook."""

LINES: list = []
