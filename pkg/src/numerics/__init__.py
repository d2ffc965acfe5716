"""
Fixed-step integration and from-scratch neural network numerics.
"""
