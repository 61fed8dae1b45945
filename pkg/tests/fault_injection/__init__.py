"""
Fault injection tests for the RBF Helmholtz solver.
"""

