"""
Functional tests for the RBF Helmholtz solver.
"""

