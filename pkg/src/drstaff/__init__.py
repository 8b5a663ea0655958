"""Distributionally robust nurse staffing and pool design."""
