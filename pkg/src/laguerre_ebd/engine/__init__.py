"""Filter design, recursion and the two-stage cascade."""
