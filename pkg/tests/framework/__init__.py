"""
Test framework for config-driven testing.
"""

