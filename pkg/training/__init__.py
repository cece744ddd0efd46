"""Mean-teacher training loop."""
