"""
Qubit filtering and control laboratory.
"""
