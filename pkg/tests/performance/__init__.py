"""
Performance tests for the RBF Helmholtz solver.
"""

