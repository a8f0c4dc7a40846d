"""Featherweight Java checkers: contextual and co-contextual."""
