"""
Test package for the qubit laboratory.
"""
