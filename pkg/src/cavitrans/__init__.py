"""Cavity-enhanced microwave-to-optical transduction in a three-level atomic vapour."""
