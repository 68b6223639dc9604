"""
Configuration and helper utilities for the channel simulator.
"""
