"""Surrogate losses and consistency checks for learning to defer."""
