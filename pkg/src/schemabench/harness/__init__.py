"""Budgeted episodes, agent transports and the run matrix."""
